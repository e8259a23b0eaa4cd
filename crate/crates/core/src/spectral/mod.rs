//! Normalized Laplacian, eigensolver and windowed eigenvector stacks.

mod eigensolver;
mod laplacian;
mod windows;

pub use eigensolver::{dense_eigenpairs, refine_smallest_k, solve_smallest_k, EigenPairs, EigenParams};
pub use laplacian::{ncut, NormalizedLaplacian};
pub use windows::{
    align_windows, default_window_len, overlap_correlation, solve_windows, window_schedule,
    EigenStack, TemporalWindow, WindowDiagnostics, WindowEigen,
};
