"""Sum-product networks compressed into non-negative tensor trains.

Re-exports resolve lazily so the CLI can pin BLAS thread pools through
environment variables before numpy is first imported.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "Assignment": "states",
    "pairs_from_bits": "states",
    "enumerate_states": "states",
    "SpnGraph": "spn",
    "SumNode": "spn",
    "ProductNode": "spn",
    "LeafNode": "spn",
    "Rank1Term": "spn",
    "SpnError": "spn",
    "SpnFormatError": "spn",
    "ValidationReport": "spn",
    "Dataset": "learn",
    "DatasetError": "learn",
    "LearnConfig": "learn",
    "g_test": "learn",
    "chop": "learn",
    "slice_instances": "learn",
    "learn_spn": "learn",
    "load_dataset": "datasets",
    "save_dataset": "datasets",
    "sample_spn": "datasets",
    "random_spn": "datasets",
    "bernoulli_mixture_spn": "datasets",
    "random_tt": "datasets",
    "TensorTrain": "tensor_train",
    "TensorTrainError": "tensor_train",
    "tt_eval": "tensor_train",
    "tt_eval_states": "tensor_train",
    "tt_partition": "tensor_train",
    "tt_full": "tensor_train",
    "tt_from_rank1_sum": "tensor_train",
    "left_normalize_step": "tensor_train",
    "right_normalize_step": "tensor_train",
    "canonicalize": "tensor_train",
    "normalized_form_violations": "tensor_train",
    "parameter_count": "tensor_train",
    "khatri_rao_system": "tensor_train",
    "save_tt": "tensor_train",
    "load_tt": "tensor_train",
    "NnlsProblem": "nnls",
    "NnlsResult": "nnls",
    "nnls_solve": "nnls",
    "ConversionConfig": "converter",
    "ConversionProblem": "converter",
    "ConversionReport": "converter",
    "ConversionError": "converter",
    "ModelCollapseError": "converter",
    "AlsState": "converter",
    "generate_non_samples": "converter",
    "build_problem": "converter",
    "assemble_row": "converter",
    "assemble_rows": "converter",
    "update_core": "converter",
    "convert": "converter",
    "tv_distance": "metrics",
    "spn_parameter_count": "metrics",
    "spn_parameter_stats": "metrics",
    "parameter_count_from_stats": "metrics",
    "probability_profile": "metrics",
    "report": "metrics",
    "EvalReport": "metrics",
    "ProfileRow": "metrics",
    "MetricsError": "metrics",
    "write_profile_csv": "metrics",
    "write_profile_svg": "metrics",
}


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
