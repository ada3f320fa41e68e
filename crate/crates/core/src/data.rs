//! Plant simulation and data assembly.
//!
//! The simulator is the only place that reads the true system matrices;
//! everything downstream consumes only the recorded data matrices and the
//! disturbance bound.

use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sets::{MatrixZonotope, Zonotope};

/// Discrete-time plant `x(t+1) = A x(t) + B u(t) + w(t)` with `w` drawn from
/// a zonotopic disturbance set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearSystem {
    #[serde(with = "crate::io::a2")]
    pub a: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub b: Array2<f64>,
    pub disturbance: Zonotope,
}

impl LinearSystem {
    pub fn new(a: Array2<f64>, b: Array2<f64>, disturbance: Zonotope) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || disturbance.dim() != n {
            return Err(Error::shape(format!(
                "system shapes: A {}x{}, B {}x{}, disturbance dim {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                disturbance.dim()
            )));
        }
        Ok(LinearSystem { a, b, disturbance })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// True closed-loop matrix `A + B K`; used only by test oracles and the
    /// empirical verifier, never by synthesis.
    pub fn closed_loop(&self, k: &Array2<f64>) -> Array2<f64> {
        &self.a + &self.b.dot(k)
    }
}

/// How inputs are produced during data collection.
#[derive(Clone, Debug)]
pub enum InputPolicy {
    /// Replay a fixed input sequence.
    Sequence(Vec<Array1<f64>>),
    /// State feedback `u = K x + e` with excitation `e` uniform in
    /// `[-excitation, excitation]^m`.
    Feedback { gain: Array2<f64>, excitation: f64 },
}

/// A simulated run: `steps + 1` states, `steps` inputs, `steps` realized
/// disturbances.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Array1<f64>>,
    pub inputs: Vec<Array1<f64>>,
    pub disturbances: Vec<Array1<f64>>,
}

/// Simulate the plant for `steps` steps, recording realized disturbances so
/// oracles can replay the run exactly.
pub fn simulate(
    sys: &LinearSystem,
    x0: &Array1<f64>,
    policy: &InputPolicy,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if x0.len() != sys.state_dim() {
        return Err(Error::shape(format!(
            "initial state has dim {}, system has {}",
            x0.len(),
            sys.state_dim()
        )));
    }
    if let InputPolicy::Sequence(seq) = policy {
        if seq.len() < steps {
            return Err(Error::shape(format!(
                "{} inputs provided for {steps} steps",
                seq.len()
            )));
        }
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut disturbances = Vec::with_capacity(steps);
    states.push(x0.clone());
    for t in 0..steps {
        let x = states[t].clone();
        let u = match policy {
            InputPolicy::Sequence(seq) => seq[t].clone(),
            InputPolicy::Feedback { gain, excitation } => {
                let mut u = gain.dot(&x);
                if *excitation > 0.0 {
                    for ui in u.iter_mut() {
                        *ui += rng.random_range(-*excitation..=*excitation);
                    }
                }
                u
            }
        };
        let w = sys.disturbance.sample(rng);
        let next = sys.a.dot(&x) + sys.b.dot(&u) + &w;
        states.push(next);
        inputs.push(u);
        disturbances.push(w);
    }
    Ok(Trajectory {
        states,
        inputs,
        disturbances,
    })
}

/// Re-run the plant on recorded inputs and disturbances. Bit-identical to
/// the original run.
pub fn replay(
    sys: &LinearSystem,
    x0: &Array1<f64>,
    inputs: &[Array1<f64>],
    disturbances: &[Array1<f64>],
) -> Trajectory {
    let mut states = vec![x0.clone()];
    for (u, w) in inputs.iter().zip(disturbances.iter()) {
        let x = states.last().unwrap();
        states.push(sys.a.dot(x) + sys.b.dot(u) + w);
    }
    Trajectory {
        states,
        inputs: inputs.to_vec(),
        disturbances: disturbances.to_vec(),
    }
}

/// Origin of a data batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchTag {
    TargetTask,
    SourceTask,
    Online,
}

/// One experiment's data matrices: inputs `U0`, shifted states `X0`/`X1`,
/// and the stacked regressor `D0 = [X0; U0]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataBatch {
    #[serde(with = "crate::io::a2")]
    pub u0: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub x0: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub x1: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub d0: Array2<f64>,
    pub t: usize,
    pub tag: BatchTag,
}

impl DataBatch {
    pub fn state_dim(&self) -> usize {
        self.x0.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u0.nrows()
    }
}

/// Arrange a trajectory's `T+1` states and `T` inputs into the data
/// matrices.
pub fn build_batch(trajectory: &Trajectory, tag: BatchTag) -> Result<DataBatch> {
    let t = trajectory.inputs.len();
    if trajectory.states.len() != t + 1 {
        return Err(Error::shape(format!(
            "{} states for {t} inputs",
            trajectory.states.len()
        )));
    }
    if t == 0 {
        return Err(Error::shape("a batch needs at least one sample"));
    }
    let n = trajectory.states[0].len();
    let m = trajectory.inputs[0].len();
    let mut x0 = Array2::zeros((n, t));
    let mut x1 = Array2::zeros((n, t));
    let mut u0 = Array2::zeros((m, t));
    for col in 0..t {
        x0.column_mut(col).assign(&trajectory.states[col]);
        x1.column_mut(col).assign(&trajectory.states[col + 1]);
        u0.column_mut(col).assign(&trajectory.inputs[col]);
    }
    let d0 = concatenate![Axis(0), x0, u0];
    Ok(DataBatch {
        u0,
        x0,
        x1,
        d0,
        t,
        tag,
    })
}

/// The disturbance-sequence set: `T` horizontally stacked copies of the
/// disturbance zonotope as one matrix zonotope with `T * s_w` generators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisturbanceConcat {
    pub mz: MatrixZonotope,
    pub horizon: usize,
    pub base_generators: usize,
}

impl DisturbanceConcat {
    /// Index of the generator that places base generator `gen` at time step
    /// `step` (time-major layout).
    pub fn generator_index(&self, step: usize, gen: usize) -> usize {
        debug_assert!(step < self.horizon && gen < self.base_generators);
        step * self.base_generators + gen
    }
}

/// Build the `T`-fold concatenation of a disturbance zonotope. Generator
/// `(step, i)` holds base generator column `i` in column `step` and zeros
/// elsewhere; the center repeats the base center in every column.
pub fn t_concat_disturbance(z: &Zonotope, horizon: usize) -> Result<DisturbanceConcat> {
    if horizon == 0 {
        return Err(Error::InvalidParameter(
            "concatenation horizon must be >= 1".into(),
        ));
    }
    let n = z.dim();
    let s_w = z.num_generators();
    let mut center = Array2::zeros((n, horizon));
    for col in 0..horizon {
        center.column_mut(col).assign(z.center());
    }
    let mut generators = Vec::with_capacity(horizon * s_w);
    for step in 0..horizon {
        for gen in 0..s_w {
            let mut g = Array2::zeros((n, horizon));
            g.column_mut(step).assign(&z.generators().column(gen));
            generators.push(g);
        }
    }
    Ok(DisturbanceConcat {
        mz: MatrixZonotope::new(center, generators)?,
        horizon,
        base_generators: s_w,
    })
}

/// Numerical rank test: true iff the rank at threshold `tol * sigma_max`
/// equals the row count (full row rank).
pub fn check_rank(d0: &Array2<f64>, tol: f64) -> bool {
    linalg::numerical_rank(d0, tol) == d0.nrows()
}

/// Orthonormal basis of the right null space of a full-row-rank matrix:
/// columns satisfy `D0 N = 0` with `N' N = I`, and there are
/// `T - rank` of them. Errors when the rank condition fails.
pub fn right_annihilator(d0: &Array2<f64>, tol: f64) -> Result<Array2<f64>> {
    let rows = d0.nrows();
    let cols = d0.ncols();
    if !check_rank(d0, tol) {
        return Err(Error::RankDeficient(format!(
            "data matrix is {}x{} with numerical rank {}",
            rows,
            cols,
            linalg::numerical_rank(d0, tol)
        )));
    }
    if cols <= rows {
        return Ok(Array2::zeros((cols, 0)));
    }
    // Trailing columns of the full Q factor of D0' span the null space.
    let (q, _) = linalg::qr_full(&d0.t().to_owned());
    Ok(q.slice(ndarray::s![.., rows..]).to_owned())
}

/// Derive a per-task seed from a base seed and a task index (splitmix-style
/// mixing), so parallel trials get independent streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Write a batch as CSV: one row per time step `t, x1..xn, u1..um`; the
/// final row carries the terminal state with empty input fields.
pub fn batch_to_csv(batch: &DataBatch, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let n = batch.state_dim();
    let m = batch.input_dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for t in 0..batch.t {
        let mut rec = vec![t.to_string()];
        rec.extend((0..n).map(|i| format!("{}", batch.x0[[i, t]])));
        rec.extend((0..m).map(|i| format!("{}", batch.u0[[i, t]])));
        w.write_record(&rec)?;
    }
    let mut last = vec![batch.t.to_string()];
    last.extend((0..n).map(|i| format!("{}", batch.x1[[i, batch.t - 1]])));
    last.extend((0..m).map(|_| String::new()));
    w.write_record(&last)?;
    w.flush()?;
    Ok(())
}

/// Read a batch back from [`batch_to_csv`]'s layout.
pub fn batch_from_csv(path: impl AsRef<Path>, tag: BatchTag) -> Result<DataBatch> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let header = r.headers()?.clone();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let m = header.iter().filter(|h| h.starts_with('u')).count();
    if n == 0 {
        return Err(Error::shape("batch csv has no state columns"));
    }
    let mut states: Vec<Array1<f64>> = Vec::new();
    let mut inputs: Vec<Array1<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let x = Array1::from_iter(
            (1..=n).map(|i| rec.get(i).unwrap_or("").parse::<f64>().unwrap_or(f64::NAN)),
        );
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::shape("batch csv has malformed state fields"));
        }
        states.push(x);
        let u_fields: Vec<&str> = (n + 1..=n + m).map(|i| rec.get(i).unwrap_or("")).collect();
        if u_fields.iter().all(|f| f.is_empty()) {
            continue; // terminal row
        }
        let u = Array1::from_iter(u_fields.iter().map(|f| f.parse::<f64>().unwrap_or(f64::NAN)));
        if u.iter().any(|v| v.is_nan()) {
            return Err(Error::shape("batch csv has malformed input fields"));
        }
        inputs.push(u);
    }
    if states.len() != inputs.len() + 1 {
        return Err(Error::shape(format!(
            "batch csv has {} states for {} inputs",
            states.len(),
            inputs.len()
        )));
    }
    let traj = Trajectory {
        disturbances: Vec::new(),
        states,
        inputs,
    };
    build_batch(&traj, tag)
}
