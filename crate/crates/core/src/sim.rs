//! Closed-loop runs: plant, controller and network advanced on the sampling
//! grid, plus trace, drop log and metrics output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::controller::{controller_step, prime_requests, ControllerState, Mode, MpcRequest};
use crate::error::Result;
use crate::netsim::{dispatch, edge_policy, nodes_with_role, Delivery, DispatchRecord, NodeRole};
use crate::parallel;
use crate::scenario::Scenario;

/// Tolerance below which a constraint excess is not counted as a violation.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub cycle: usize,
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub mode: Mode,
    pub beta: f64,
    pub horizon: Option<usize>,
    pub delivered: usize,
    pub late: usize,
    pub disconnected: usize,
    /// Largest excess over the inequality constraints at `(x, u)`.
    pub violation: f64,
    pub sp: DVector<f64>,
    pub sp_eff: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub drops: Vec<DispatchRecord>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketUsage {
    pub min_horizon: usize,
    pub max_horizon: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DropCounts {
    pub issued: usize,
    pub delivered: usize,
    pub late: usize,
    pub disconnected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub cycles: usize,
    pub closed_loop_fraction: f64,
    pub transition_fraction: f64,
    pub local_fraction: f64,
    pub horizon_usage: Vec<BucketUsage>,
    /// Usage of horizons outside every bucket.
    pub unbucketed_usage: f64,
    pub violation_count: usize,
    pub violation_max: f64,
    /// `Σ |p − p_sp|·dt` against the requested set-point.
    pub iae: f64,
    pub max_abs_position: f64,
    pub drops: DropCounts,
    pub drop_fraction: f64,
}

/// Runs the scenario to completion.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    let cfg = &s.controller;
    let dt = s.dt;
    let clouds = nodes_with_role(&s.nodes, NodeRole::Cloud);
    let edge = nodes_with_role(&s.nodes, NodeRole::Edge).first().copied();

    let mut state = ControllerState::default();
    let mut x = s.initial_state.clone();
    let mut pending: Vec<DispatchRecord> = Vec::new();
    let mut drops = Vec::new();
    if s.prime && !s.nodes.is_empty() {
        let sp0 = s.setpoint_at(0.0).clone();
        let requests = prime_requests(cfg, &mut state, &x, &sp0, 0.0);
        let placed = place(s, &clouds, edge, &mut state, requests, -dt, &x, &sp0);
        pending = dispatch(&s.spec, &placed, &s.nodes, &s.schedule, s.seed)?;
    }

    let mut trace = Vec::with_capacity(s.cycles);
    for k in 0..s.cycles {
        let t = k as f64 * dt;
        let sp = s.setpoint_at(t).clone();
        let responses: Vec<_> = pending.iter().filter_map(DispatchRecord::response).collect();
        let count = |d: Delivery| pending.iter().filter(|r| r.outcome == d).count();
        let (delivered, late, disconnected) = (count(Delivery::Delivered), count(Delivery::Late), count(Delivery::Disconnected));
        drops.append(&mut pending);

        let out = controller_step(cfg, &mut state, &x, &sp, &responses, t)?;
        let violation = s.spec.constraints.violation(&x, &out.u);
        trace.push(TraceRow {
            cycle: k,
            t,
            x: x.clone(),
            u: out.u.clone(),
            mode: out.mode,
            beta: out.beta,
            horizon: out.selected_horizon,
            delivered,
            late,
            disconnected,
            violation,
            sp: sp.clone(),
            sp_eff: out.sp_eff.clone(),
        });

        if !s.nodes.is_empty() {
            let placed = place(s, &clouds, edge, &mut state, out.requests, t, &out.x_pred, &sp);
            pending = dispatch(&s.spec, &placed, &s.nodes, &s.schedule, s.seed)?;
        }
        x = s.truth.step(&x, &out.u)?;
    }
    drops.append(&mut pending);

    let metrics = compute_metrics(&trace, &drops, &s.buckets, cfg.position_index, dt);
    Ok(RunOutput { trace, drops, metrics })
}

/// Fan-out requests go round-robin over the cloud nodes; the edge node, if
/// any, gets one extra request chosen by [`edge_policy`].
#[allow(clippy::too_many_arguments)]
fn place(
    s: &Scenario,
    clouds: &[usize],
    edge: Option<usize>,
    state: &mut ControllerState,
    requests: Vec<MpcRequest>,
    issue: f64,
    x_pred: &DVector<f64>,
    sp: &DVector<f64>,
) -> Vec<(MpcRequest, usize)> {
    let mut placed: Vec<(MpcRequest, usize)> = if clouds.is_empty() {
        Vec::new()
    } else {
        requests.into_iter().enumerate().map(|(i, r)| (r, clouds[i % clouds.len()])).collect()
    };
    if let Some(e) = edge {
        if let Some(h) = edge_policy(state.last_used_horizon, state.last_cycle_usable, &s.controller.horizons) {
            placed.push((state.request(x_pred.clone(), sp.clone(), h, issue, s.dt), e));
        }
    }
    placed
}

pub fn compute_metrics(trace: &[TraceRow], drops: &[DispatchRecord], buckets: &[(usize, usize)], position_index: usize, dt: f64) -> Metrics {
    let cycles = trace.len();
    let frac = |c: usize| if cycles == 0 { 0.0 } else { c as f64 / cycles as f64 };
    let mode_count = |m: Mode| trace.iter().filter(|r| r.mode == m).count();

    let mut per_bucket = vec![0usize; buckets.len()];
    let mut unbucketed = 0;
    for h in trace.iter().filter_map(|r| r.horizon) {
        match buckets.iter().position(|&(lo, hi)| h >= lo && h <= hi) {
            Some(i) => per_bucket[i] += 1,
            None => unbucketed += 1,
        }
    }
    let horizon_usage = buckets
        .iter()
        .zip(per_bucket)
        .map(|(&(lo, hi), c)| BucketUsage {
            min_horizon: lo,
            max_horizon: hi,
            fraction: frac(c),
        })
        .collect();

    let violations: Vec<f64> = trace.iter().map(|r| r.violation).filter(|v| *v > VIOLATION_TOL).collect();
    let iae = trace.iter().map(|r| (r.x[position_index] - r.sp[position_index]).abs() * dt).sum();
    let max_abs_position = trace.iter().map(|r| r.x[position_index].abs()).fold(0.0, f64::max);

    let count = |d: Delivery| drops.iter().filter(|r| r.outcome == d).count();
    let counts = DropCounts {
        issued: drops.len(),
        delivered: count(Delivery::Delivered),
        late: count(Delivery::Late),
        disconnected: count(Delivery::Disconnected),
    };
    let drop_fraction = if counts.issued == 0 {
        0.0
    } else {
        (counts.late + counts.disconnected) as f64 / counts.issued as f64
    };

    Metrics {
        cycles,
        closed_loop_fraction: frac(mode_count(Mode::Assisted)),
        transition_fraction: frac(mode_count(Mode::Transition)),
        local_fraction: frac(mode_count(Mode::Local)),
        horizon_usage,
        unbucketed_usage: frac(unbucketed),
        violation_count: violations.len(),
        violation_max: violations.iter().copied().fold(0.0, f64::max),
        iae,
        max_abs_position,
        drops: counts,
        drop_fraction,
    }
}

/// Usage distribution over buckets plus the share of cycles without a plan.
pub fn usage_distribution(m: &Metrics) -> Vec<f64> {
    let mut d: Vec<f64> = m.horizon_usage.iter().map(|b| b.fraction).collect();
    d.push(m.unbucketed_usage);
    d.push(1.0 - m.closed_loop_fraction);
    d
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros removed.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".to_owned() } else if v > 0.0 { "inf".to_owned() } else { "-inf".to_owned() };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        trim_zeros(&fixed)
    } else {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s.to_owned()
    }
}

pub fn trace_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_owned()];
    cols.extend((0..n).map(|i| format!("x{i}")));
    cols.extend((0..m).map(|i| format!("u{i}")));
    cols.extend(["mode", "beta", "horizon", "delivered", "dropped_late", "dropped_disconnected", "violation"].map(String::from));
    cols.extend((0..n).map(|i| format!("sp{i}")));
    cols.extend((0..n).map(|i| format!("sp_eff{i}")));
    cols.join(",")
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let (n, m) = trace.first().map_or((0, 0), |r| (r.x.len(), r.u.len()));
    let mut out = trace_header(n, m);
    out.push('\n');
    for r in trace {
        let mut fields: Vec<String> = vec![fmt_sig9(r.t)];
        fields.extend(r.x.iter().map(|v| fmt_sig9(*v)));
        fields.extend(r.u.iter().map(|v| fmt_sig9(*v)));
        fields.push(r.mode.to_string());
        fields.push(fmt_sig9(r.beta));
        fields.push(r.horizon.map(|h| h.to_string()).unwrap_or_default());
        fields.push(r.delivered.to_string());
        fields.push(r.late.to_string());
        fields.push(r.disconnected.to_string());
        fields.push(fmt_sig9(r.violation));
        fields.extend(r.sp.iter().map(|v| fmt_sig9(*v)));
        fields.extend(r.sp_eff.iter().map(|v| fmt_sig9(*v)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub const DROPS_HEADER: &str = "request_id,target_cycle,node,horizon,issue_time,latency,exec_time,completion_time,iterations,feasible,outcome";

pub fn drops_csv(drops: &[DispatchRecord], node_names: &[String]) -> String {
    let mut out = String::from(DROPS_HEADER);
    out.push('\n');
    for d in drops {
        let (iters, feasible, exec, done) = match &d.plan {
            Some(p) => (p.iterations.to_string(), p.feasible.to_string(), fmt_sig9(d.exec_time), fmt_sig9(d.completion_time)),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            d.request.id,
            d.request.target_cycle,
            node_names[d.node],
            d.request.horizon,
            fmt_sig9(d.request.issue_time),
            fmt_sig9(d.latency),
            exec,
            done,
            iters,
            feasible,
            d.outcome
        );
    }
    out
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Writes `trace.csv`, `drops.csv` and `metrics.json` into `dir`.
pub fn write_run(dir: &Path, s: &Scenario, run: &RunOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let names: Vec<String> = s.nodes.iter().map(|n| n.name.clone()).collect();
    write_atomic(&dir.join("trace.csv"), trace_csv(&run.trace).as_bytes())?;
    write_atomic(&dir.join("drops.csv"), drops_csv(&run.drops, &names).as_bytes())?;
    let mut json = serde_json::to_string_pretty(&MetricsFile {
        scenario: &s.name,
        seed: s.seed,
        metrics: &run.metrics,
    })
    .map_err(std::io::Error::other)?;
    json.push('\n');
    write_atomic(&dir.join("metrics.json"), json.as_bytes())
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    scenario: &'a str,
    seed: u64,
    metrics: &'a Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub aggregate: BTreeMap<String, Summary>,
    pub runs: Vec<Metrics>,
}

/// Runs `count` consecutive seeds starting at the scenario's seed.
pub fn sweep(s: &Scenario, count: usize) -> Result<SweepReport> {
    let seeds: Vec<u64> = (0..count as u64).map(|i| s.seed.wrapping_add(i)).collect();
    let runs = parallel::map(&seeds, |&seed| run_scenario(&s.with_seed(seed)).map(|r| r.metrics));
    let runs: Vec<Metrics> = runs.into_iter().collect::<Result<_>>()?;

    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in &runs {
        let mut put = |k: String, v: f64| columns.entry(k).or_default().push(v);
        put("closed_loop_fraction".into(), m.closed_loop_fraction);
        put("transition_fraction".into(), m.transition_fraction);
        put("local_fraction".into(), m.local_fraction);
        put("violation_count".into(), m.violation_count as f64);
        put("violation_max".into(), m.violation_max);
        put("iae".into(), m.iae);
        put("max_abs_position".into(), m.max_abs_position);
        put("drop_fraction".into(), m.drop_fraction);
        put("dropped_late".into(), m.drops.late as f64);
        put("dropped_disconnected".into(), m.drops.disconnected as f64);
        for b in &m.horizon_usage {
            put(format!("usage_{}_{}", b.min_horizon, b.max_horizon), b.fraction);
        }
    }
    let aggregate = columns.into_iter().map(|(k, v)| (k, summarize(&v))).collect();
    Ok(SweepReport {
        scenario: s.name.clone(),
        seeds,
        aggregate,
        runs,
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn summarize(v: &[f64]) -> Summary {
    if v.is_empty() {
        return Summary { mean: 0.0, std: 0.0 };
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let std = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    Summary { mean, std }
}
