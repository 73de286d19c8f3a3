use nalgebra::{DMatrix, DVector};

use super::params::NvParams;
use super::state::{Level, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix7, Vector7};

/// MHz · ns.
pub const MHZ_NS: f64 = 1e-3;

const COLUMN_SUM_TOL: f64 = 1e-12;

/// Generator `R_M` of `dρ/dt = R_M ρ`, stored in MHz. Entry `(i, j)` is the
/// rate from level `j` into level `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMatrix {
    m: Matrix7,
}

impl RateMatrix {
    /// Assembles the seven-level generator.
    ///
    /// Recombination feeds GS₁ with 2Γ_rec/3 and GS₀ with Γ_rec/3 because GS₁
    /// lumps m_s = ±1.
    pub fn build(p: &NvParams) -> Result<Self> {
        p.validate()?;
        use Level::*;
        let mut m = Matrix7::zeros();
        let mut set = |to: Level, from: Level, v: f64| m[(to.index(), from.index())] = v;

        set(Es1, Es1, -(p.gamma_es + p.gamma_es1_to_a1 + p.gamma_ion));
        set(Es1, Gs1, p.gamma_532);

        set(Es0, Es0, -(p.gamma_es + p.gamma_es0_to_a1 + p.gamma_ion));
        set(Es0, Gs0, p.gamma_532);

        set(A1, Es1, p.gamma_es1_to_a1);
        set(A1, Es0, p.gamma_es0_to_a1);
        set(A1, A1, -p.gamma_a1);

        set(Gs1, Es1, p.gamma_es);
        set(Gs1, A1, p.p_a1_to_gs1 * p.gamma_a1);
        set(Gs1, Gs1, -p.gamma_532);
        set(Gs1, EsNv0, 2.0 * p.gamma_rec / 3.0);

        set(Gs0, Es0, p.gamma_es);
        set(Gs0, A1, (1.0 - p.p_a1_to_gs1) * p.gamma_a1);
        set(Gs0, Gs0, -p.gamma_532);
        set(Gs0, EsNv0, p.gamma_rec / 3.0);

        set(EsNv0, EsNv0, -(p.gamma_rec + p.gamma_es_nv0));
        set(EsNv0, GsNv0, p.gamma_532_nv0);

        set(GsNv0, Es1, p.gamma_ion);
        set(GsNv0, Es0, p.gamma_ion);
        set(GsNv0, EsNv0, p.gamma_es_nv0);
        set(GsNv0, GsNv0, -p.gamma_532_nv0);

        Self::from_matrix(m)
    }

    /// Wraps an arbitrary matrix after checking the generator invariants.
    pub fn from_matrix(m: Matrix7) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rate matrix"));
        }
        for j in 0..7 {
            let col = m.column(j);
            let scale = col.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            let sum: f64 = col.iter().sum();
            if sum.abs() > COLUMN_SUM_TOL * scale {
                return Err(Error::InvalidMatrix(format!("column {} sums to {sum:e}", Level::ALL[j])));
            }
            for i in 0..7 {
                let v = m[(i, j)];
                if i != j && v < 0.0 {
                    return Err(Error::InvalidMatrix(format!(
                        "negative off-diagonal rate {v} from {} to {}",
                        Level::ALL[j],
                        Level::ALL[i]
                    )));
                }
            }
        }
        Ok(RateMatrix { m })
    }

    /// Rate from `from` into `to`, in MHz.
    pub fn entry(&self, to: Level, from: Level) -> f64 {
        self.m[(to.index(), from.index())]
    }

    /// The generator in MHz.
    pub fn as_matrix(&self) -> &Matrix7 {
        &self.m
    }

    /// The generator in ns⁻¹.
    pub fn per_ns(&self) -> Matrix7 {
        self.m * MHZ_NS
    }

    /// Largest |diagonal| in MHz, i.e. the fastest outflow.
    pub fn max_outflow(&self) -> f64 {
        (0..7).map(|i| self.m[(i, i)].abs()).fold(0.0, f64::max)
    }

    fn edges(&self) -> [[bool; 7]; 7] {
        let mut e = [[false; 7]; 7];
        for (j, row) in e.iter_mut().enumerate() {
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = i != j && self.m[(i, j)] > 0.0;
            }
        }
        e
    }

    /// Closed communicating classes of the transition graph. Each class
    /// carries its own stationary distribution; their count is the dimension
    /// of the generator's null space.
    pub fn closed_classes(&self) -> Vec<Vec<Level>> {
        let edges = self.edges();
        // reach[a][b]: b reachable from a
        let mut reach = [[false; 7]; 7];
        for a in 0..7 {
            reach[a] = edges[a];
            reach[a][a] = true;
        }
        for k in 0..7 {
            for a in 0..7 {
                if reach[a][k] {
                    let via = reach[k];
                    for (r, v) in reach[a].iter_mut().zip(via) {
                        *r |= v;
                    }
                }
            }
        }
        let mut assigned = [false; 7];
        let mut classes = Vec::new();
        for a in 0..7 {
            if assigned[a] {
                continue;
            }
            let class: Vec<usize> = (0..7).filter(|&b| reach[a][b] && reach[b][a]).collect();
            for &b in &class {
                assigned[b] = true;
            }
            let closed = class.iter().all(|&j| (0..7).all(|i| !edges[j][i] || class.contains(&i)));
            if closed {
                classes.push(class.into_iter().map(|i| Level::ALL[i]).collect());
            }
        }
        classes
    }

    /// Normalized null vector of the generator.
    ///
    /// Fails when the null space is more than one-dimensional, naming the
    /// decoupled blocks.
    pub fn steady_state(&self) -> Result<StateVector> {
        let classes = self.closed_classes();
        if classes.len() > 1 {
            return Err(Error::AmbiguousSteadyState { blocks: classes.iter().map(|c| describe(c)).collect() });
        }
        let class = &classes[0];
        if class.len() < 7 {
            // Levels outside the closed class are transient: exactly empty.
            let idx: Vec<usize> = class.iter().map(|l| l.index()).collect();
            let pi = block_stationary(&self.m, &idx)?;
            let mut out = Vector7::zeros();
            for (k, &i) in idx.iter().enumerate() {
                out[i] = pi[k];
            }
            return StateVector::from_vector(out);
        }
        let (v, _) = linalg::null_vector(&self.m);
        normalized_null(v)
    }

    /// `lim_{t→∞} e^{R t} init`.
    ///
    /// Equals [`RateMatrix::steady_state`] whenever that is unique. With
    /// several closed blocks the limit mixes each block's stationary
    /// distribution by the mass that ends up there.
    pub fn limit(&self, init: &StateVector) -> Result<StateVector> {
        let classes = self.closed_classes();
        if classes.len() == 1 {
            return self.steady_state();
        }
        let rho0 = init.as_vector();
        let in_closed: Vec<usize> = classes.iter().flatten().map(|l| l.index()).collect();
        let transient: Vec<usize> = (0..7).filter(|i| !in_closed.contains(i)).collect();

        // Expected occupation time of each transient level.
        let occupation = if transient.is_empty() {
            DVector::zeros(0)
        } else {
            let n = transient.len();
            let neg_rtt = DMatrix::from_fn(n, n, |a, b| -self.m[(transient[a], transient[b])]);
            let rhs = DVector::from_fn(n, |a, _| rho0[transient[a]]);
            neg_rtt.lu().solve(&rhs).ok_or_else(|| Error::InvalidMatrix("transient block is singular".into()))?
        };

        let mut out = Vector7::zeros();
        for class in &classes {
            let idx: Vec<usize> = class.iter().map(|l| l.index()).collect();
            let mut mass: f64 = idx.iter().map(|&i| rho0[i]).sum();
            for (a, &j) in transient.iter().enumerate() {
                let inflow: f64 = idx.iter().map(|&i| self.m[(i, j)]).sum();
                mass += inflow * occupation[a];
            }
            if mass == 0.0 {
                continue;
            }
            let pi = block_stationary(&self.m, &idx)?;
            for (k, &i) in idx.iter().enumerate() {
                out[i] += mass * pi[k];
            }
        }
        StateVector::from_vector(out)
    }

    /// `ρ(t) = e^{R t} ρ(0)` at each requested time (ns).
    pub fn evolve(&self, init: &StateVector, times_ns: &[f64]) -> Result<Vec<StateVector>> {
        check_times(times_ns)?;
        let r = self.per_ns();
        times_ns
            .iter()
            .map(|&t| {
                let prop = linalg::propagator(&r, t).ok_or(Error::NonFinite("rate matrix"))?;
                StateVector::from_vector(prop * init.as_vector())
            })
            .collect()
    }
}

pub(crate) fn check_times(times_ns: &[f64]) -> Result<()> {
    if times_ns.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTimes("times must be finite"));
    }
    if times_ns.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidTimes("times must be non-negative"));
    }
    if times_ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidTimes("times must be ascending"));
    }
    Ok(())
}

fn describe(class: &[Level]) -> String {
    let names: Vec<&str> = class.iter().map(|l| l.label()).collect();
    format!("{{{}}}", names.join(", "))
}

fn normalized_null(v: Vector7) -> Result<StateVector> {
    let sum = v.sum();
    if sum == 0.0 || !sum.is_finite() {
        return Err(Error::InvalidMatrix("null vector has zero weight".into()));
    }
    // Sign fix, then drop round-off negatives.
    let v = (v / sum).map(|x| x.max(0.0));
    StateVector::from_vector(v / v.sum())
}

fn block_stationary(m: &Matrix7, idx: &[usize]) -> Result<DVector<f64>> {
    let n = idx.len();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let block = DMatrix::from_fn(n, n, |a, b| m[(idx[a], idx[b])]);
    let svd = block.svd_unordered(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::InvalidMatrix("SVD failed".into()))?;
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let v = v_t.row(imin).transpose();
    let sum = v.sum();
    let v = (v / sum).map(|x| x.max(0.0));
    let s = v.sum();
    Ok(v / s)
}
