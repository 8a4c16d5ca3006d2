from .idx import load_idx_dataset, read_idx

__all__ = ["load_idx_dataset", "read_idx"]
