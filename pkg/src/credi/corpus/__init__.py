from credi.corpus.io import load_dataset, parse_unit_record, save_dataset, unit_record
from credi.corpus.ops import (
    StatsReport,
    anonymize_names,
    balance_labels,
    dataset_stats,
    export_finetune_file,
    rename_characters,
    split_dataset,
    split_sizes,
)
from credi.corpus.types import (
    LABELS_BY_DIMENSION,
    Dataset,
    DialogueUnit,
    Dimension,
    LabelMap,
    Quote,
    RelationInstance,
    RelationLabel,
    SplitSpec,
    check_label_map,
)

__all__ = [
    "LABELS_BY_DIMENSION", "Dataset", "DialogueUnit", "Dimension", "LabelMap", "Quote",
    "RelationInstance", "RelationLabel", "SplitSpec", "StatsReport", "anonymize_names",
    "balance_labels", "check_label_map", "dataset_stats", "export_finetune_file",
    "load_dataset", "parse_unit_record", "rename_characters", "save_dataset",
    "split_dataset", "split_sizes", "unit_record",
]
