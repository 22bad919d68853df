//! The individual studies. Each builds its trial list, runs it on the rayon pool, and
//! folds the trial records into tables.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::table::{Cell, Table};
use super::ExperimentResult;
use crate::detector::{self, ClickDistribution, ResponseMatrix};
use crate::diagnostics::{self, sample_std, DiagnosticsBundle};
use crate::error::{Error, Result};
use crate::fock::{PhotonDistribution, SourceSpec};
use crate::retrieval::{self, Algorithm, RetrievalReport, RetrievalSettings};
use crate::seeds::derive_seed;

/// Traces are checked for monotone decrease from this iteration on.
const TRACE_SETTLE_ITERATIONS: usize = 10;
/// Log-spaced trace samples kept per decade of iterations.
const TRACE_POINTS_PER_DECADE: f64 = 20.0;

struct Source {
    label: String,
    truth: PhotonDistribution,
    exact: ClickDistribution,
}

/// Shared immutable inputs of a study.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    matrix: ResponseMatrix,
    sources: Vec<Source>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let matrix = ResponseMatrix::new(cfg.detector, cfg.retrieval.cutoff)?;
        let sources = cfg
            .sources
            .iter()
            .map(|spec| prepare(spec, cfg))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            matrix,
            sources,
        })
    }

    fn seed(&self, source: usize, grid: usize, trial: usize) -> u64 {
        derive_seed(
            self.cfg.seed,
            &[
                self.cfg.kind.seed_tag(),
                source as u64,
                grid as u64,
                trial as u64,
            ],
        )
    }

    /// Click data for one trial; `runs == 0` gives the exact probabilities.
    fn data(&self, source: usize, runs: u64, seed: u64) -> Result<ClickDistribution> {
        let exact = &self.sources[source].exact;
        if runs == 0 {
            Ok(exact.clone())
        } else {
            detector::sample_clicks(exact, runs, seed)
        }
    }

    /// Number of sources, run counts, and trials.
    fn dims(&self) -> (usize, usize, usize) {
        (
            self.sources.len(),
            self.cfg.grids.runs.len(),
            self.cfg.trials,
        )
    }

    fn runs_grid(&self) -> &[u64] {
        &self.cfg.grids.runs
    }

    fn em_settings(&self) -> RetrievalSettings {
        RetrievalSettings {
            algorithm: Algorithm::Em,
            epsilon: self.cfg.em_epsilon(),
            ..self.cfg.retrieval.clone()
        }
    }

    fn eme_settings(&self) -> RetrievalSettings {
        RetrievalSettings {
            algorithm: Algorithm::Eme,
            ..self.cfg.retrieval.clone()
        }
    }

    fn label(&self, source: usize) -> &str {
        &self.sources[source].label
    }

    fn truth(&self, source: usize) -> &PhotonDistribution {
        &self.sources[source].truth
    }

    /// Tags an error with the trial it came from.
    fn tag<T>(&self, r: Result<T>, source: usize, runs: u64, seed: u64) -> Result<T> {
        r.map_err(|e| Error::Experiment {
            context: format!("{}, R = {runs}, seed {seed}", self.label(source)),
            source: Box::new(e),
        })
    }
}

/// Truth on a cutoff wide enough to hold the source, and its exact click probabilities.
fn prepare(spec: &SourceSpec, cfg: &ExperimentConfig) -> Result<Source> {
    let cutoff = spec.suggested_cutoff().max(cfg.retrieval.cutoff);
    let truth = spec.distribution(cutoff)?;
    let matrix = ResponseMatrix::new(cfg.detector, cutoff)?;
    let exact = detector::forward(&matrix, &truth)?;
    Ok(Source {
        label: spec.to_string(),
        truth,
        exact,
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Least-squares line through `(x, y)`, returned as `(slope, intercept)`.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Half the L1 distance between a possibly signed vector and a distribution.
fn signed_tvd(x: &[f64], q: &PhotonDistribution) -> f64 {
    let len = x.len().max(q.len());
    let q = q.padded(len);
    let l1: f64 = (0..len)
        .map(|i| (x.get(i).copied().unwrap_or(0.0) - q[i]).abs())
        .sum();
    l1 / 2.0
}

struct Trial {
    tvd: f64,
    fidelity: f64,
    report: RetrievalReport,
}

fn retrieve_against(
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
    settings: &RetrievalSettings,
    truth: &PhotonDistribution,
) -> Result<Trial> {
    let report = retrieval::retrieve(d, matrix, settings)?;
    Ok(Trial {
        tvd: diagnostics::tvd(&report.estimate, truth),
        fidelity: diagnostics::fidelity(&report.estimate, truth),
        report,
    })
}

/// Δ versus measurement runs, with per-source medians and power-law fits.
pub fn run_scaling_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let (ns, nr, nt) = ctx.dims();
    let settings = &cfg.retrieval;
    let units: Vec<(usize, usize, usize)> = (0..ns)
        .flat_map(|s| (0..nr).flat_map(move |r| (0..nt).map(move |t| (s, r, t))))
        .collect();
    let trials: Vec<(u64, Trial)> = units
        .par_iter()
        .map(|&(s, r, t)| {
            let runs = ctx.runs_grid()[r];
            let seed = ctx.seed(s, r, t);
            let out = ctx
                .data(s, runs, seed)
                .and_then(|d| retrieve_against(&d, &ctx.matrix, settings, ctx.truth(s)));
            ctx.tag(out, s, runs, seed).map(|x| (seed, x))
        })
        .collect::<Result<_>>()?;

    let mut rows = Table::new(&[
        "source",
        "runs",
        "trial",
        "seed",
        "tvd",
        "fidelity",
        "iterations",
        "converged",
    ]);
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (&(s, r, t), (seed, x)) in units.iter().zip(&trials) {
        rows.push(vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            t.into(),
            (*seed).into(),
            x.tvd.into(),
            x.fidelity.into(),
            x.report.iterations.into(),
            x.report.converged().into(),
        ]);
        groups.entry((s, r)).or_default().push(x.tvd);
    }

    let mut summary = Table::new(&[
        "source",
        "runs",
        "median_tvd",
        "mean_tvd",
        "std_tvd",
        "band_low",
        "band_high",
        "in_band",
    ]);
    let mut fit_points: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (&(s, r), tvds) in &groups {
        let runs = ctx.runs_grid()[r];
        let med = median(tvds);
        let (low, high, inside) = if runs > 0 {
            let root = (runs as f64).sqrt();
            let (low, high) = (0.25 / root, 14.0 / root);
            fit_points
                .entry(s)
                .or_default()
                .push(((runs as f64).log10(), med.log10()));
            (
                Cell::from(low),
                Cell::from(high),
                Cell::from(low <= med && med <= high),
            )
        } else {
            (Cell::Empty, Cell::Empty, Cell::Empty)
        };
        summary.push(vec![
            ctx.label(s).into(),
            runs.into(),
            med.into(),
            mean(tvds).into(),
            sample_std(tvds).into(),
            low,
            high,
            inside,
        ]);
    }

    let mut fits = Table::new(&["source", "slope", "intercept", "points"]);
    for (s, points) in fit_points {
        let (slope, intercept) = if points.len() >= 2 {
            let (a, b) = linear_fit(&points);
            (Cell::from(a), Cell::from(b))
        } else {
            (Cell::Empty, Cell::Empty)
        };
        fits.push(vec![
            ctx.label(s).into(),
            slope,
            intercept,
            points.len().into(),
        ]);
    }

    let mut result = ExperimentResult::new(cfg);
    result.tables.insert("rows".into(), rows);
    result.tables.insert("summary".into(), summary);
    result.tables.insert("fits".into(), fits);
    Ok(result)
}

const METHODS: [&str; 3] = ["direct_inverse", "em", "eme"];

struct MethodTrial {
    tvd: f64,
    fidelity: Option<f64>,
    iterations: Option<u64>,
    negative: bool,
    min_entry: f64,
}

/// Direct inversion, EM, and EME on the same data sets.
pub fn run_method_comparison(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let (ns, nr, nt) = ctx.dims();
    let em = ctx.em_settings();
    let eme = ctx.eme_settings();
    let units: Vec<(usize, usize, usize, usize)> = (0..ns)
        .flat_map(|s| {
            (0..nr).flat_map(move |r| {
                (0..nt).flat_map(move |t| (0..METHODS.len()).map(move |k| (s, r, t, k)))
            })
        })
        .collect();
    let trials: Vec<(u64, MethodTrial)> = units
        .par_iter()
        .map(|&(s, r, t, k)| {
            let runs = ctx.runs_grid()[r];
            let seed = ctx.seed(s, r, t);
            let truth = ctx.truth(s);
            let out = ctx.data(s, runs, seed).and_then(|d| match k {
                0 => {
                    let x = retrieval::direct_inverse(&d, &ctx.matrix)?;
                    let min_entry = x.iter().copied().fold(f64::INFINITY, f64::min);
                    let fidelity = (min_entry >= 0.0)
                        .then(|| PhotonDistribution::from_weights(x.clone()).ok())
                        .flatten()
                        .map(|p| diagnostics::fidelity(&p, truth));
                    Ok(MethodTrial {
                        tvd: signed_tvd(&x, truth),
                        fidelity,
                        iterations: None,
                        negative: min_entry < 0.0,
                        min_entry,
                    })
                }
                _ => {
                    let settings = if k == 1 { &em } else { &eme };
                    let x = retrieve_against(&d, &ctx.matrix, settings, truth)?;
                    Ok(MethodTrial {
                        tvd: x.tvd,
                        fidelity: Some(x.fidelity),
                        iterations: Some(x.report.iterations),
                        negative: false,
                        min_entry: x
                            .report
                            .estimate
                            .probs()
                            .iter()
                            .copied()
                            .fold(1.0, f64::min),
                    })
                }
            });
            ctx.tag(out, s, runs, seed).map(|x| (seed, x))
        })
        .collect::<Result<_>>()?;

    let mut rows = Table::new(&[
        "source",
        "runs",
        "trial",
        "seed",
        "method",
        "tvd",
        "fidelity",
        "iterations",
        "negative",
        "min_entry",
    ]);
    let mut groups: BTreeMap<(usize, usize), Vec<&MethodTrial>> = BTreeMap::new();
    for (&(s, r, t, k), (seed, x)) in units.iter().zip(&trials) {
        rows.push(vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            t.into(),
            (*seed).into(),
            METHODS[k].into(),
            x.tvd.into(),
            x.fidelity.into(),
            x.iterations.into(),
            x.negative.into(),
            x.min_entry.into(),
        ]);
        groups.entry((r, k)).or_default().push(x);
    }

    let mut summary = Table::new(&[
        "runs",
        "method",
        "mean_fidelity",
        "mean_tvd",
        "negative_fraction",
        "rows",
        "rows_with_fidelity",
    ]);
    for (&(r, k), xs) in &groups {
        let fids: Vec<f64> = xs.iter().filter_map(|x| x.fidelity).collect();
        let tvds: Vec<f64> = xs.iter().map(|x| x.tvd).collect();
        let negative = xs.iter().filter(|x| x.negative).count() as f64 / xs.len() as f64;
        summary.push(vec![
            ctx.runs_grid()[r].into(),
            METHODS[k].into(),
            (!fids.is_empty()).then(|| mean(&fids)).into(),
            mean(&tvds).into(),
            negative.into(),
            xs.len().into(),
            fids.len().into(),
        ]);
    }

    let mut result = ExperimentResult::new(cfg);
    result.tables.insert("rows".into(), rows);
    result.tables.insert("summary".into(), summary);
    Ok(result)
}

/// EME accuracy and iteration count across entropy weights. Every λ sees the same data.
pub fn run_lambda_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let (ns, nr, nt) = ctx.dims();
    let lambdas = &cfg.grids.lambdas;
    let nl = lambdas.len();
    let units: Vec<(usize, usize, usize, usize)> = (0..ns)
        .flat_map(|s| {
            (0..nr).flat_map(move |r| (0..nl).flat_map(move |l| (0..nt).map(move |t| (s, r, l, t))))
        })
        .collect();
    let trials: Vec<(u64, Trial)> = units
        .par_iter()
        .map(|&(s, r, l, t)| {
            let runs = ctx.runs_grid()[r];
            let seed = ctx.seed(s, r, t);
            let settings = RetrievalSettings::eme(lambdas[l]).with_epsilon(cfg.retrieval.epsilon);
            let settings = RetrievalSettings {
                cutoff: cfg.retrieval.cutoff,
                max_iterations: cfg.retrieval.max_iterations,
                init: cfg.retrieval.init.clone(),
                ..settings
            };
            let out = ctx
                .data(s, runs, seed)
                .and_then(|d| retrieve_against(&d, &ctx.matrix, &settings, ctx.truth(s)));
            ctx.tag(out, s, runs, seed).map(|x| (seed, x))
        })
        .collect::<Result<_>>()?;

    let mut rows = Table::new(&[
        "source",
        "runs",
        "lambda",
        "trial",
        "seed",
        "tvd",
        "fidelity",
        "iterations",
        "converged",
    ]);
    let mut groups: BTreeMap<(usize, usize, usize), Vec<&Trial>> = BTreeMap::new();
    for (&(s, r, l, t), (seed, x)) in units.iter().zip(&trials) {
        rows.push(vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            lambdas[l].into(),
            t.into(),
            (*seed).into(),
            x.tvd.into(),
            x.fidelity.into(),
            x.report.iterations.into(),
            x.report.converged().into(),
        ]);
        groups.entry((s, r, l)).or_default().push(x);
    }

    let mut summary = Table::new(&[
        "source",
        "runs",
        "lambda",
        "mean_tvd",
        "std_tvd",
        "mean_fidelity",
        "mean_iterations",
    ]);
    let mut best: BTreeMap<(usize, usize), (usize, f64)> = BTreeMap::new();
    for (&(s, r, l), xs) in &groups {
        let tvds: Vec<f64> = xs.iter().map(|x| x.tvd).collect();
        let fids: Vec<f64> = xs.iter().map(|x| x.fidelity).collect();
        let its: Vec<f64> = xs.iter().map(|x| x.report.iterations as f64).collect();
        let m = mean(&tvds);
        summary.push(vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            lambdas[l].into(),
            m.into(),
            sample_std(&tvds).into(),
            mean(&fids).into(),
            mean(&its).into(),
        ]);
        let entry = best.entry((s, r)).or_insert((l, m));
        if m < entry.1 {
            *entry = (l, m);
        }
    }

    let mut optimum = Table::new(&["source", "runs", "best_lambda", "best_mean_tvd"]);
    for ((s, r), (l, m)) in best {
        optimum.push(vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            lambdas[l].into(),
            m.into(),
        ]);
    }

    let mut result = ExperimentResult::new(cfg);
    result.tables.insert("rows".into(), rows);
    result.tables.insert("summary".into(), summary);
    result.tables.insert("optimum".into(), optimum);
    Ok(result)
}

/// Indices `0, 1, ..., 9`, then about [`TRACE_POINTS_PER_DECADE`] log-spaced indices per
/// decade, then the last index.
fn log_spaced_indices(len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..len.min(TRACE_SETTLE_ITERATIONS)).collect();
    let mut x = TRACE_SETTLE_ITERATIONS as f64;
    let step = 10f64.powf(1.0 / TRACE_POINTS_PER_DECADE);
    while (x as usize) < len {
        let i = x as usize;
        if out.last() != Some(&i) {
            out.push(i);
        }
        x *= step;
    }
    if len > 0 && out.last() != Some(&(len - 1)) {
        out.push(len - 1);
    }
    out
}

/// Number of increases in `trace` after the settling prefix.
fn trace_increases(trace: &[f64]) -> usize {
    trace
        .iter()
        .skip(TRACE_SETTLE_ITERATIONS)
        .collect::<Vec<_>>()
        .windows(2)
        .filter(|w| w[1] > w[0])
        .count()
}

/// Step-distance traces of EM and EME on the same data, and iterations to `ε`.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let (ns, nr, nt) = ctx.dims();
    let em = ctx.em_settings().with_traces(1);
    let eme = ctx.eme_settings().with_traces(1);
    let units: Vec<(usize, usize, usize, usize)> = (0..ns)
        .flat_map(|s| {
            (0..nr).flat_map(move |r| (0..nt).flat_map(move |t| (0..2).map(move |k| (s, r, t, k))))
        })
        .collect();
    struct Outcome {
        trial: Trial,
        increases: usize,
        samples: Vec<(usize, f64, f64)>,
    }
    let outcomes: Vec<(u64, Outcome)> = units
        .par_iter()
        .map(|&(s, r, t, k)| {
            let runs = ctx.runs_grid()[r];
            let seed = ctx.seed(s, r, t);
            let settings = if k == 0 { &em } else { &eme };
            let out = ctx
                .data(s, runs, seed)
                .and_then(|d| retrieve_against(&d, &ctx.matrix, settings, ctx.truth(s)))
                .map(|mut trial| {
                    let dist = trial.report.distance_trace.take().unwrap_or_default();
                    let like = trial.report.likelihood_trace.take().unwrap_or_default();
                    let samples = log_spaced_indices(dist.len())
                        .into_iter()
                        .map(|i| (i + 1, dist[i], like.get(i).copied().unwrap_or(f64::NAN)))
                        .collect();
                    Outcome {
                        increases: trace_increases(&dist),
                        trial,
                        samples,
                    }
                });
            ctx.tag(out, s, runs, seed).map(|x| (seed, x))
        })
        .collect::<Result<_>>()?;

    let names = ["em", "eme"];
    let mut rows = Table::new(&[
        "source",
        "runs",
        "trial",
        "seed",
        "method",
        "iterations",
        "converged",
        "final_distance",
        "trace_increases",
        "tvd",
        "fidelity",
    ]);
    let mut traces = Table::new(&[
        "source",
        "runs",
        "trial",
        "method",
        "iteration",
        "distance",
        "log_likelihood",
    ]);
    let mut pairs: BTreeMap<(usize, usize, usize), [u64; 2]> = BTreeMap::new();
    for (&(s, r, t, k), (seed, o)) in units.iter().zip(&outcomes) {
        let runs = ctx.runs_grid()[r];
        let rep = &o.trial.report;
        rows.push(vec![
            ctx.label(s).into(),
            runs.into(),
            t.into(),
            (*seed).into(),
            names[k].into(),
            rep.iterations.into(),
            rep.converged().into(),
            rep.final_step_distance.into(),
            o.increases.into(),
            o.trial.tvd.into(),
            o.trial.fidelity.into(),
        ]);
        for &(i, dist, like) in &o.samples {
            traces.push(vec![
                ctx.label(s).into(),
                runs.into(),
                t.into(),
                names[k].into(),
                i.into(),
                dist.into(),
                like.into(),
            ]);
        }
        pairs.entry((s, r, t)).or_default()[k] = rep.iterations;
    }

    let mut summary = Table::new(&[
        "source",
        "runs",
        "trial",
        "em_iterations",
        "eme_iterations",
        "ratio",
    ]);
    for ((s, r, t), [em_it, eme_it]) in pairs {
        summary.push(vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            t.into(),
            em_it.into(),
            eme_it.into(),
            (eme_it as f64 / em_it as f64).into(),
        ]);
    }

    let mut result = ExperimentResult::new(cfg);
    result.tables.insert("rows".into(), rows);
    result.tables.insert("summary".into(), summary);
    result.tables.insert("traces".into(), traces);
    Ok(result)
}

/// Largest `|c_m − f_m| / σ_m` between forward-mapped estimate and observed frequencies,
/// with `σ_m² = f_m (1 − f_m) / R` (floored at one count).
fn click_max_z(
    estimate: &PhotonDistribution,
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
) -> f64 {
    let f = d.frequencies();
    let runs = d.runs().unwrap_or(0) as f64;
    let mut c = vec![0.0; matrix.rows()];
    matrix.apply(estimate.probs(), &mut c);
    if runs == 0.0 {
        return f64::NAN;
    }
    f.iter()
        .zip(&c)
        .map(|(&f, &c)| {
            let var = (f * (1.0 - f)).max(1.0 / runs) / runs;
            (c - f).abs() / var.sqrt()
        })
        .fold(0.0, f64::max)
}

/// EM and EME as functions of the stop distance on the same data sets.
pub fn run_overfitting_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let (ns, nr, nt) = ctx.dims();
    let eps = &cfg.grids.epsilons;
    let ne = eps.len();
    let names = ["em", "eme"];
    let units: Vec<(usize, usize, usize, usize, usize)> = (0..ns)
        .flat_map(|s| {
            (0..nr).flat_map(move |r| {
                (0..2).flat_map(move |k| {
                    (0..ne).flat_map(move |e| (0..nt).map(move |t| (s, r, k, e, t)))
                })
            })
        })
        .collect();
    let outcomes: Vec<(u64, Trial, f64)> = units
        .par_iter()
        .map(|&(s, r, k, e, t)| {
            let runs = ctx.runs_grid()[r];
            let seed = ctx.seed(s, r, t);
            let base = if k == 0 {
                ctx.em_settings()
            } else {
                ctx.eme_settings()
            };
            let settings = base.with_epsilon(eps[e]);
            let out = ctx.data(s, runs, seed).and_then(|d| {
                let x = retrieve_against(&d, &ctx.matrix, &settings, ctx.truth(s))?;
                let z = click_max_z(&x.report.estimate, &d, &ctx.matrix);
                Ok((x, z))
            });
            ctx.tag(out, s, runs, seed).map(|(x, z)| (seed, x, z))
        })
        .collect::<Result<_>>()?;

    let mut rows = Table::new(&[
        "source",
        "runs",
        "method",
        "epsilon",
        "trial",
        "seed",
        "tvd",
        "fidelity",
        "iterations",
        "converged",
        "click_max_z",
    ]);
    let mut groups: BTreeMap<(usize, usize, usize, usize), Vec<(&Trial, f64)>> = BTreeMap::new();
    for (&(s, r, k, e, t), (seed, x, z)) in units.iter().zip(&outcomes) {
        rows.push(vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            names[k].into(),
            eps[e].into(),
            t.into(),
            (*seed).into(),
            x.tvd.into(),
            x.fidelity.into(),
            x.report.iterations.into(),
            x.report.converged().into(),
            (*z).into(),
        ]);
        groups.entry((s, r, k, e)).or_default().push((x, *z));
    }

    let mut summary = Table::new(&[
        "source",
        "runs",
        "method",
        "epsilon",
        "mean_tvd",
        "std_tvd",
        "pooled_tvd",
        "max_click_z",
    ]);
    let mut distributions = Table::new(&["source", "runs", "method", "epsilon", "n", "p"]);
    for (&(s, r, k, e), xs) in &groups {
        let tvds: Vec<f64> = xs.iter().map(|(x, _)| x.tvd).collect();
        let len = xs[0].0.report.estimate.len();
        let mut pooled = vec![0.0; len];
        for (x, _) in xs {
            for (acc, &p) in pooled.iter_mut().zip(x.report.estimate.probs()) {
                *acc += p / xs.len() as f64;
            }
        }
        let pooled = PhotonDistribution::from_weights(pooled)?;
        let runs = ctx.runs_grid()[r];
        summary.push(vec![
            ctx.label(s).into(),
            runs.into(),
            names[k].into(),
            eps[e].into(),
            mean(&tvds).into(),
            sample_std(&tvds).into(),
            diagnostics::tvd(&pooled, ctx.truth(s)).into(),
            xs.iter().map(|(_, z)| *z).fold(0.0, f64::max).into(),
        ]);
        for (n, &p) in pooled.probs().iter().enumerate() {
            distributions.push(vec![
                ctx.label(s).into(),
                runs.into(),
                names[k].into(),
                eps[e].into(),
                n.into(),
                p.into(),
            ]);
        }
    }

    let mut result = ExperimentResult::new(cfg);
    result.tables.insert("rows".into(), rows);
    result.tables.insert("summary".into(), summary);
    result.tables.insert("distributions".into(), distributions);
    Ok(result)
}

const BUNDLE_FIELDS: [&str; 6] = ["mean", "var", "g2", "q", "parity", "w00"];

fn bundle_cells(b: &DiagnosticsBundle) -> Vec<Option<f64>> {
    b.flat_values()[..BUNDLE_FIELDS.len()].to_vec()
}

/// Simulated analog of the measured-data tables: model diagnostics, and per method the
/// fidelity, distance, and diagnostics of the retrieved statistics over repetitions.
pub fn run_table_report(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let (ns, nr, nt) = ctx.dims();
    let em = ctx.em_settings();
    let eme = ctx.eme_settings();
    let names = ["em", "eme"];
    let units: Vec<(usize, usize, usize, usize)> = (0..ns)
        .flat_map(|s| {
            (0..nr).flat_map(move |r| (0..2).flat_map(move |k| (0..nt).map(move |t| (s, r, k, t))))
        })
        .collect();
    let outcomes: Vec<(u64, Trial)> = units
        .par_iter()
        .map(|&(s, r, k, t)| {
            let runs = ctx.runs_grid()[r];
            let seed = ctx.seed(s, r, t);
            let settings = if k == 0 { &em } else { &eme };
            let out = ctx
                .data(s, runs, seed)
                .and_then(|d| retrieve_against(&d, &ctx.matrix, settings, ctx.truth(s)));
            ctx.tag(out, s, runs, seed).map(|x| (seed, x))
        })
        .collect::<Result<_>>()?;

    let mut model = Table::new(&[&["source"][..], &BUNDLE_FIELDS[..]].concat());
    for (s, src) in ctx.sources.iter().enumerate() {
        let b = DiagnosticsBundle::compute(&src.truth, None);
        let mut row: Vec<Cell> = vec![ctx.label(s).into()];
        row.extend(bundle_cells(&b).into_iter().map(Cell::from));
        model.push(row);
    }

    let mut header: Vec<&str> = vec![
        "source",
        "runs",
        "method",
        "trial",
        "seed",
        "fidelity",
        "tvd",
        "iterations",
    ];
    header.extend(BUNDLE_FIELDS);
    let mut rows = Table::new(&header);
    let mut groups: BTreeMap<(usize, usize, usize), Vec<(&Trial, DiagnosticsBundle)>> =
        BTreeMap::new();
    for (&(s, r, k, t), (seed, x)) in units.iter().zip(&outcomes) {
        let b = DiagnosticsBundle::compute(&x.report.estimate, None);
        let mut row: Vec<Cell> = vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            names[k].into(),
            t.into(),
            (*seed).into(),
            x.fidelity.into(),
            x.tvd.into(),
            x.report.iterations.into(),
        ];
        row.extend(bundle_cells(&b).into_iter().map(Cell::from));
        rows.push(row);
        groups.entry((s, r, k)).or_default().push((x, b));
    }

    let mut header: Vec<String> = [
        "source",
        "runs",
        "method",
        "fidelity",
        "fidelity_std",
        "tvd",
        "tvd_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for f in BUNDLE_FIELDS {
        header.push(f.to_string());
        header.push(format!("{f}_std"));
    }
    let mut summary = Table::new(&header);
    for (&(s, r, k), xs) in &groups {
        let fids: Vec<f64> = xs.iter().map(|(x, _)| x.fidelity).collect();
        let tvds: Vec<f64> = xs.iter().map(|(x, _)| x.tvd).collect();
        let mut row: Vec<Cell> = vec![
            ctx.label(s).into(),
            ctx.runs_grid()[r].into(),
            names[k].into(),
            mean(&fids).into(),
            sample_std(&fids).into(),
            mean(&tvds).into(),
            sample_std(&tvds).into(),
        ];
        for i in 0..BUNDLE_FIELDS.len() {
            let vals: Option<Vec<f64>> = xs.iter().map(|(_, b)| bundle_cells(b)[i]).collect();
            match vals {
                Some(v) => {
                    row.push(mean(&v).into());
                    row.push(sample_std(&v).into());
                }
                None => row.extend([Cell::Empty, Cell::Empty]),
            }
        }
        summary.push(row);
    }

    let mut result = ExperimentResult::new(cfg);
    result.tables.insert("rows".into(), rows);
    result.tables.insert("summary".into(), summary);
    result.tables.insert("model".into(), model);
    Ok(result)
}

/// One retrieval per (source, runs, trial) with the configured algorithm, keeping the
/// retrieved distribution next to the truth.
pub fn run_single_retrieval(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let (ns, nr, nt) = ctx.dims();
    let units: Vec<(usize, usize, usize)> = (0..ns)
        .flat_map(|s| (0..nr).flat_map(move |r| (0..nt).map(move |t| (s, r, t))))
        .collect();
    let outcomes: Vec<(u64, Vec<f64>, Option<RetrievalReport>)> = units
        .par_iter()
        .map(|&(s, r, t)| {
            let runs = ctx.runs_grid()[r];
            let seed = ctx.seed(s, r, t);
            let out = ctx
                .data(s, runs, seed)
                .and_then(|d| match cfg.retrieval.algorithm {
                    Algorithm::DirectInverse => {
                        Ok((retrieval::direct_inverse(&d, &ctx.matrix)?, None))
                    }
                    _ => {
                        let rep = retrieval::retrieve(&d, &ctx.matrix, &cfg.retrieval)?;
                        Ok((rep.estimate.probs().to_vec(), Some(rep)))
                    }
                });
            ctx.tag(out, s, runs, seed).map(|(x, rep)| (seed, x, rep))
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<&str> = vec![
        "source",
        "runs",
        "trial",
        "seed",
        "algorithm",
        "iterations",
        "converged",
        "tvd",
        "fidelity",
    ];
    header.extend(BUNDLE_FIELDS);
    let mut rows = Table::new(&header);
    let mut distributions = Table::new(&["source", "runs", "trial", "n", "p", "truth"]);
    let algorithm = serde_json::to_value(cfg.retrieval.algorithm)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    for (&(s, r, t), (seed, x, rep)) in units.iter().zip(&outcomes) {
        let truth = ctx.truth(s);
        let runs = ctx.runs_grid()[r];
        let estimate = rep.as_ref().map(|r| &r.estimate);
        let bundle = estimate.map(|p| DiagnosticsBundle::compute(p, None));
        let mut row: Vec<Cell> = vec![
            ctx.label(s).into(),
            runs.into(),
            t.into(),
            (*seed).into(),
            algorithm.as_str().into(),
            rep.as_ref().map(|r| r.iterations).into(),
            rep.as_ref().map(|r| r.converged()).into(),
            signed_tvd(x, truth).into(),
            estimate.map(|p| diagnostics::fidelity(p, truth)).into(),
        ];
        match bundle {
            Some(b) => row.extend(bundle_cells(&b).into_iter().map(Cell::from)),
            None => row.extend(BUNDLE_FIELDS.iter().map(|_| Cell::Empty)),
        }
        rows.push(row);
        let padded = truth.padded(x.len().max(truth.len()));
        for (n, &q) in padded.iter().enumerate() {
            distributions.push(vec![
                ctx.label(s).into(),
                runs.into(),
                t.into(),
                n.into(),
                x.get(n).copied().unwrap_or(0.0).into(),
                q.into(),
            ]);
        }
    }

    let mut result = ExperimentResult::new(cfg);
    result.tables.insert("rows".into(), rows);
    result.tables.insert("distributions".into(), distributions);
    Ok(result)
}
