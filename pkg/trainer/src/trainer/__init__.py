"""Fine-tunes pretrained encoder checkpoints on weak labels.

The package consumes two JSONL files produced upstream (weak labels and a
record corpus), trains a binary abstract classifier, and writes score files
with one probability per record. It shares no code with the pipeline that
produced its inputs: the file formats are the whole contract.
"""

from .spec import SpecError, TrainSpec, load_spec
from .data import DataError, load_corpus_abstracts, load_weak_labels
from .finetune import TrainerError, export_scores, fine_tune

__all__ = [
    "DataError",
    "SpecError",
    "TrainSpec",
    "TrainerError",
    "export_scores",
    "fine_tune",
    "load_corpus_abstracts",
    "load_spec",
    "load_weak_labels",
]
