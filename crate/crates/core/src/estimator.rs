//! Inference for convolution sketches.
//!
//! The estimate of one repetition sums, over one bin index per graph
//! component, the product of every relation's counter at the sum of its
//! components' indices (mod `m`). [`naive_estimate`] evaluates that sum
//! directly in `O(m^components)`; [`combine_sketches`] factorizes it along a
//! rooted traversal of the join graph into Hadamard products and circular
//! cross-correlations, `O(r m log m)` with FFTs.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{JoinGraph, PlanTree};
use crate::par::{self, Execution};
use crate::sketch::{Method, RelationSketch, SketchConfig};

/// Largest `m` for which [`Kernel::Auto`] uses direct summation.
pub const DIRECT_MAX_M: usize = 32;

/// Largest `m^components` [`naive_estimate`] will enumerate.
pub const NAIVE_BUDGET: u64 = 10_000_000;

/// How circular convolutions and cross-correlations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Direct summation up to [`DIRECT_MAX_M`], FFT above.
    #[default]
    Auto,
    /// `O(m^2)` summation; exact for integer inputs.
    Direct,
    /// Always through the FFT.
    Fft,
}

/// Forward and inverse plans of one length.
type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// Circular convolution / cross-correlation of length-`m` real vectors.
#[derive(Clone)]
pub struct Correlator {
    m: usize,
    fft: Option<FftPair>,
}

impl std::fmt::Debug for Correlator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator")
            .field("m", &self.m)
            .field("fft", &self.fft.is_some())
            .finish()
    }
}

impl Correlator {
    pub fn new(m: usize, kernel: Kernel) -> Self {
        let use_fft = match kernel {
            Kernel::Auto => m > DIRECT_MAX_M,
            Kernel::Direct => false,
            Kernel::Fft => true,
        };
        let fft = use_fft.then(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
        });
        Correlator { m, fft }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn uses_fft(&self) -> bool {
        self.fft.is_some()
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.m || y.len() != self.m {
            return Err(Error::InvalidArgument(format!(
                "vector lengths {} and {} do not match m={}",
                x.len(),
                y.len(),
                self.m
            )));
        }
        Ok(())
    }

    /// `(x * y)_j = sum_i x_i y_{(j - i) mod m}`
    pub fn convolve(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        Ok(match &self.fft {
            Some((fwd, inv)) => spectral(fwd, inv, x, y, false),
            None => {
                let m = self.m;
                let mut out = vec![0.0; m];
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (k, &yk) in y.iter().enumerate() {
                        let j = if i + k >= m { i + k - m } else { i + k };
                        out[j] += xi * yk;
                    }
                }
                out
            }
        })
    }

    /// `(x ⋆ y)_j = sum_i x_i y_{(j + i) mod m}`
    pub fn cross_correlate(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        Ok(match &self.fft {
            Some((fwd, inv)) => spectral(fwd, inv, x, y, true),
            None => {
                let m = self.m;
                let mut out = vec![0.0; m];
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    // y_{j+i} lands in out_j
                    for (k, &yk) in y.iter().enumerate() {
                        let j = if k >= i { k - i } else { k + m - i };
                        out[j] += xi * yk;
                    }
                }
                out
            }
        })
    }
}

fn spectral(fwd: &Arc<dyn Fft<f64>>, inv: &Arc<dyn Fft<f64>>, x: &[f64], y: &[f64], conjugate_x: bool) -> Vec<f64> {
    let m = x.len();
    let mut fx: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut fy: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut fx);
    fwd.process(&mut fy);
    for (a, b) in fx.iter_mut().zip(&fy) {
        *a = if conjugate_x { a.conj() * b } else { *a * b };
    }
    inv.process(&mut fx);
    let scale = 1.0 / m as f64;
    fx.into_iter().map(|c| c.re * scale).collect()
}

/// Circular convolution of two equal-length vectors.
pub fn circ_convolve(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Correlator::new(x.len(), Kernel::Auto).convolve(x, y)
}

/// Circular cross-correlation of two equal-length real vectors.
pub fn circ_cross_correlate(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Correlator::new(x.len(), Kernel::Auto).cross_correlate(x, y)
}

/// Median of the repetition estimates; the mean of the middle two for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    pub per_repetition: Vec<f64>,
    /// Median of `per_repetition`.
    pub estimate: f64,
    pub inference_ms: f64,
}

impl EstimateReport {
    pub fn from_repetitions(per_repetition: Vec<f64>, method: Method, elapsed: Duration) -> Self {
        EstimateReport {
            method,
            estimate: median(&per_repetition),
            per_repetition,
            inference_ms: elapsed.as_secs_f64() * 1e3,
        }
    }
}

/// Checks that `sketches[k]` is the sketch of relation `k` and that all of
/// them share one configuration with the expected method.
pub(crate) fn check_sketch_set(sketches: &[RelationSketch], graph: &JoinGraph, method: Method) -> Result<SketchConfig> {
    if sketches.len() != graph.num_relations() {
        return Err(Error::Mismatch(format!(
            "query has {} relations but {} sketches were given",
            graph.num_relations(),
            sketches.len()
        )));
    }
    let config = *sketches[0].config();
    for (k, s) in sketches.iter().enumerate() {
        if s.relation() != k {
            return Err(Error::Mismatch(format!(
                "sketch {k} belongs to relation {}",
                s.relation()
            )));
        }
        if *s.config() != config {
            return Err(Error::Mismatch(format!(
                "sketch of `{}` has config {:?}, expected {:?}",
                s.name(),
                s.config(),
                config
            )));
        }
    }
    if config.method != method {
        return Err(Error::Mismatch(format!(
            "sketches were built with method {} but {} inference was requested",
            config.method, method
        )));
    }
    Ok(config)
}

/// Direct evaluation of one repetition's estimate by enumerating one bin
/// index per graph component.
pub fn naive_estimate(sketches: &[RelationSketch], graph: &JoinGraph, rep: usize) -> Result<f64> {
    let config = check_sketch_set(sketches, graph, Method::Conv)?;
    if rep >= config.reps {
        return Err(Error::InvalidArgument(format!("repetition {rep} out of range")));
    }
    let m = config.m;
    let comps = graph.num_components();
    let work = (m as u64)
        .checked_pow(comps as u32)
        .filter(|&w| w <= NAIVE_BUDGET)
        .ok_or_else(|| {
            Error::Budget(format!(
                "naive evaluation needs {m}^{comps} terms (limit {NAIVE_BUDGET})"
            ))
        })?;

    let relation_components: Vec<Vec<usize>> = (0..graph.num_relations())
        .map(|k| graph.omega(k).iter().map(|&u| graph.component_index(u)).collect())
        .collect();
    let rows: Vec<&[f64]> = sketches.iter().map(|s| s.row(rep)).collect();

    let mut index = vec![0usize; comps];
    let mut total = 0.0;
    for _ in 0..work {
        let mut product = 1.0;
        for (row, comps_k) in rows.iter().zip(&relation_components) {
            let g = comps_k.iter().map(|&c| index[c]).sum::<usize>() % m;
            product *= row[g];
        }
        total += product;
        for digit in index.iter_mut() {
            *digit += 1;
            if *digit < m {
                break;
            }
            *digit = 0;
        }
    }
    Ok(total)
}

fn check_plan(plan: &PlanTree, sketches: &[RelationSketch]) -> Result<usize> {
    if sketches.is_empty() {
        return Err(Error::Mismatch("no sketches".into()));
    }
    let m = sketches[0].m();
    let mut seen = vec![false; sketches.len()];
    for node in plan.nodes() {
        match seen.get_mut(node.relation) {
            Some(s) if !*s => *s = true,
            _ => {
                return Err(Error::Mismatch(format!(
                    "plan relation {} has no matching sketch",
                    node.relation
                )))
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Mismatch("plan does not cover every sketch".into()));
    }
    for s in sketches {
        if s.method() != Method::Conv || s.m() != m {
            return Err(Error::Mismatch(format!(
                "sketch of `{}` is not a conv sketch with m={m}",
                s.name()
            )));
        }
    }
    Ok(m)
}

/// Combines the repetition-`rep` rows along `plan`; the element sum of the
/// result is that repetition's estimate.
pub fn combine_sketches(plan: &PlanTree, sketches: &[RelationSketch], rep: usize) -> Result<Vec<f64>> {
    let m = check_plan(plan, sketches)?;
    combine_with(plan, sketches, rep, &Correlator::new(m, Kernel::Auto))
}

/// [`combine_sketches`] with an explicit correlation kernel.
pub fn combine_with(
    plan: &PlanTree,
    sketches: &[RelationSketch],
    rep: usize,
    correlator: &Correlator,
) -> Result<Vec<f64>> {
    let m = check_plan(plan, sketches)?;
    if correlator.m() != m {
        return Err(Error::Mismatch(format!(
            "correlator built for m={} but sketches have m={m}",
            correlator.m()
        )));
    }
    if rep >= sketches[0].reps() {
        return Err(Error::InvalidArgument(format!("repetition {rep} out of range")));
    }
    combine_node(plan, sketches, rep, correlator, 0)
}

fn combine_node(
    plan: &PlanTree,
    sketches: &[RelationSketch],
    rep: usize,
    correlator: &Correlator,
    id: usize,
) -> Result<Vec<f64>> {
    let node = plan.node(id);
    let mut x = sketches[node.relation].row(rep).to_vec();
    for branch in &node.branches {
        let mut a = vec![1.0; x.len()];
        for &child in &branch.children {
            let c = combine_node(plan, sketches, rep, correlator, child)?;
            hadamard_assign(&mut a, &c);
        }
        x = correlator.cross_correlate(&a, &x)?;
    }
    for &child in &node.joined {
        let c = combine_node(plan, sketches, rep, correlator, child)?;
        hadamard_assign(&mut x, &c);
    }
    Ok(x)
}

fn hadamard_assign(acc: &mut [f64], other: &[f64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a *= b;
    }
}

/// Options for [`estimate_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EstimateOptions {
    pub kernel: Kernel,
    pub execution: Execution,
}

/// Median-of-repetitions estimate from conv sketches (one per relation, in relation order).
pub fn estimate(sketches: &[RelationSketch], graph: &JoinGraph, plan: &PlanTree) -> Result<EstimateReport> {
    estimate_with(sketches, graph, plan, EstimateOptions::default())
}

pub fn estimate_with(
    sketches: &[RelationSketch],
    graph: &JoinGraph,
    plan: &PlanTree,
    options: EstimateOptions,
) -> Result<EstimateReport> {
    let start = Instant::now();
    let config = check_sketch_set(sketches, graph, Method::Conv)?;
    let correlator = Correlator::new(config.m, options.kernel);
    let per_rep = par::map_range(options.execution, config.reps, |rep| {
        combine_with(plan, sketches, rep, &correlator).map(|v| v.iter().sum::<f64>())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(EstimateReport::from_repetitions(per_rep, Method::Conv, start.elapsed()))
}

/// Median of [`naive_estimate`] over all repetitions.
pub fn naive_report(sketches: &[RelationSketch], graph: &JoinGraph) -> Result<EstimateReport> {
    let start = Instant::now();
    let config = check_sketch_set(sketches, graph, Method::Conv)?;
    let per_rep = (0..config.reps)
        .map(|rep| naive_estimate(sketches, graph, rep))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EstimateReport::from_repetitions(per_rep, Method::Conv, start.elapsed()))
}

/// Bins needed to bound the absolute error by `epsilon` via Chebyshev:
/// `ceil(3^r * epsilon^-2 * prod_k ||F_k||^2)`.
pub fn required_bins(epsilon: f64, relations: usize, norm_product: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(norm_product >= 0.0 && norm_product.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid norm product {norm_product}")));
    }
    let m = 3f64.powi(relations as i32) * norm_product / (epsilon * epsilon);
    if m > u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!("required bins overflow ({m:e})")));
    }
    Ok(m.ceil() as u64)
}
