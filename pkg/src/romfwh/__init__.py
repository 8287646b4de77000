"""Reduced-order models (POD, DMD, PODI) of flow snapshots and their FWH acoustics."""

from .decomposition import (PODBasis, SingularSpectrum, cumulative_energy, normalized_singular_values,
                            pod_project, pod_reconstruct, truncated_svd, truncation_error)
from .dmd import DMDModel, continuous_spectrum, dmd_mode_field, evaluate_dmd, fit_dmd
from .podi import PODIModel, coefficient_trace, evaluate_podi, fit_podi
from .snapshot import (Field, Mesh, Probe, SnapshotDataset, TimeSeries, load_dataset, resolve_probe,
                       sample_probe, save_dataset, split_train_test)

__version__ = "0.1.0"

__all__ = [
    "DMDModel", "Field", "Mesh", "PODBasis", "PODIModel", "Probe", "SingularSpectrum",
    "SnapshotDataset", "TimeSeries", "coefficient_trace", "continuous_spectrum", "cumulative_energy",
    "dmd_mode_field", "evaluate_dmd", "evaluate_podi", "fit_dmd", "fit_podi", "load_dataset",
    "normalized_singular_values", "pod_project", "pod_reconstruct", "resolve_probe", "sample_probe",
    "save_dataset", "split_train_test", "truncated_svd", "truncation_error",
]
