//! Spin and charge photodynamics of shallow nitrogen-vacancy centers.

pub mod cli;
pub mod contrast;
pub mod error;
pub mod io;
pub mod kinetics;
pub mod linalg;
pub mod optimize;
pub mod photophysics;
pub mod pipeline;
pub mod reference;

pub use error::{Error, Result};

/// `n` points spaced evenly in log between `lo` and `hi`, both included.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| {
                    if k == 0 {
                        lo
                    } else if k == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * k as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}
