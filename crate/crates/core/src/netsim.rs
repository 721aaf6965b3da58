//! Seeded simulation of the request path to cloud and edge nodes.
//!
//! Every (cycle, horizon, node) tuple draws from its own ChaCha stream, so
//! adding or moving a request never changes the latency of another one.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::controller::{MpcRequest, MpcResponse};
use crate::error::{value_err, Result};
use crate::mpc::{exec_time_model, mpc_solve, MpcPlan, MpcSpec};
use crate::parallel;

pub const EDGE_DEFAULT_LATENCY_MS: f64 = 40.0;

/// One-way latency in milliseconds. `sigma` is the log-space standard
/// deviation and `mu` the log-space mean of the random part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Fixed { offset_ms: f64 },
    LognormalOffset { mu: f64, sigma: f64, offset_ms: f64 },
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        let (sigma, offset) = match *self {
            LatencyModel::Fixed { offset_ms } => (0.0, offset_ms),
            LatencyModel::LognormalOffset { mu, sigma, offset_ms } => {
                if !mu.is_finite() {
                    return Err(value_err("latency mu", "must be finite"));
                }
                (sigma, offset_ms)
            }
        };
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(value_err("latency sigma", "must be finite and non-negative"));
        }
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(value_err("latency offset", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Closed-form `P(latency > threshold_ms)`.
    pub fn tail_probability(&self, threshold_ms: f64) -> f64 {
        match *self {
            LatencyModel::Fixed { offset_ms } => f64::from(offset_ms > threshold_ms),
            LatencyModel::LognormalOffset { mu, sigma, offset_ms } => {
                let excess = threshold_ms - offset_ms;
                if excess <= 0.0 {
                    return 1.0;
                }
                if sigma == 0.0 {
                    return f64::from(mu.exp() > excess);
                }
                1.0 - normal_cdf((excess.ln() - mu) / sigma)
            }
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Latency in seconds.
pub fn sample_latency<R: Rng + ?Sized>(model: &LatencyModel, rng: &mut R) -> f64 {
    let ms = match *model {
        LatencyModel::Fixed { offset_ms } => offset_ms,
        LatencyModel::LognormalOffset { mu, sigma, offset_ms } => {
            if sigma == 0.0 {
                offset_ms + mu.exp()
            } else {
                let d = LogNormal::new(mu, sigma).expect("validated lognormal parameters");
                offset_ms + d.sample(rng)
            }
        }
    };
    ms / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Cloud,
    Edge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeModel {
    pub name: String,
    pub role: NodeRole,
    pub latency: LatencyModel,
}

impl NodeModel {
    pub fn cloud(name: &str, latency: LatencyModel) -> Self {
        Self {
            name: name.to_owned(),
            role: NodeRole::Cloud,
            latency,
        }
    }

    pub fn edge(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            role: NodeRole::Edge,
            latency: LatencyModel::Fixed {
                offset_ms: EDGE_DEFAULT_LATENCY_MS,
            },
        }
    }
}

/// Half-open `[start, end)` windows, in seconds, during which cloud nodes
/// are unreachable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConnectivitySchedule {
    windows: Vec<(f64, f64)>,
}

impl ConnectivitySchedule {
    pub fn new(windows: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(s, e)) in windows.iter().enumerate() {
            if !(s.is_finite() && e > s) {
                return Err(value_err("loss window", format!("window {i} must satisfy start < end")));
            }
            if i > 0 && s < windows[i - 1].1 {
                return Err(value_err("loss window", format!("window {i} overlaps or is out of order")));
            }
        }
        Ok(Self { windows })
    }

    pub fn windows(&self) -> &[(f64, f64)] {
        &self.windows
    }

    pub fn connected(&self, t: f64) -> bool {
        !self.windows.iter().any(|&(s, e)| t >= s && t < e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    Delivered,
    Late,
    Disconnected,
}

impl fmt::Display for Delivery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Delivery::Delivered => "delivered",
            Delivery::Late => "late",
            Delivery::Disconnected => "disconnected",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchRecord {
    pub request: MpcRequest,
    pub node: usize,
    pub latency: f64,
    pub exec_time: f64,
    pub completion_time: f64,
    pub outcome: Delivery,
    /// Solver result; `None` when the request never reached the node.
    pub plan: Option<MpcPlan>,
}

impl DispatchRecord {
    pub fn response(&self) -> Option<MpcResponse> {
        if self.outcome != Delivery::Delivered {
            return None;
        }
        self.plan.as_ref().map(|plan| MpcResponse {
            request_id: self.request.id,
            target_cycle: self.request.target_cycle,
            horizon: self.request.horizon,
            sp: self.request.sp.clone(),
            plan: plan.clone(),
            completion_time: self.completion_time,
        })
    }
}

/// Independent generator for one (seed, cycle, horizon, node) tuple.
pub fn stream_rng(seed: u64, cycle: u64, horizon: usize, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = splitmix(cycle);
    h = splitmix(h ^ horizon as u64);
    h = splitmix(h ^ (node as u64).rotate_left(32));
    rng.set_stream(h);
    rng
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Solves every placed request and decides whether its answer makes the
/// deadline. Cloud nodes also need the link up at issue and at completion.
/// Solves run through [`parallel::map`]; the output order matches `placed`.
pub fn dispatch(
    spec: &MpcSpec,
    placed: &[(MpcRequest, usize)],
    nodes: &[NodeModel],
    schedule: &ConnectivitySchedule,
    seed: u64,
) -> Result<Vec<DispatchRecord>> {
    for (_, node) in placed {
        if *node >= nodes.len() {
            return Err(value_err("dispatch", format!("node index {node} out of range")));
        }
    }
    let results = parallel::map(placed, |(req, node)| -> Result<DispatchRecord> {
        let model = &nodes[*node];
        let cloud = model.role == NodeRole::Cloud;
        let mut rng = stream_rng(seed, req.target_cycle, req.horizon, *node);
        let latency = sample_latency(&model.latency, &mut rng);
        if cloud && !schedule.connected(req.issue_time) {
            return Ok(DispatchRecord {
                request: req.clone(),
                node: *node,
                latency,
                exec_time: 0.0,
                completion_time: f64::INFINITY,
                outcome: Delivery::Disconnected,
                plan: None,
            });
        }
        let plan = mpc_solve(spec, &req.x_pred, &req.sp, req.horizon, None)?;
        let exec_time = exec_time_model(plan.iterations, req.horizon);
        let completion_time = req.issue_time + latency + exec_time;
        let outcome = if cloud && !schedule.connected(completion_time) {
            Delivery::Disconnected
        } else if completion_time > req.deadline {
            Delivery::Late
        } else {
            Delivery::Delivered
        };
        Ok(DispatchRecord {
            request: req.clone(),
            node: *node,
            latency,
            exec_time,
            completion_time,
            outcome,
            plan: Some(plan),
        })
    });
    results.into_iter().collect()
}

/// Horizon for this cycle's edge request: the last horizon used while plans
/// keep arriving, the largest one after a miss.
pub fn edge_policy(last_used_horizon: Option<usize>, last_cycle_usable: bool, horizons: &[usize]) -> Option<usize> {
    let largest = horizons.iter().copied().max()?;
    match last_used_horizon {
        Some(h) if last_cycle_usable => Some(h),
        _ => Some(largest),
    }
}

/// Indices of nodes with the given role.
pub fn nodes_with_role(nodes: &[NodeModel], role: NodeRole) -> Vec<usize> {
    nodes.iter().enumerate().filter(|(_, n)| n.role == role).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_and_degenerate_latency() {
        let mut rng = stream_rng(1, 0, 0, 0);
        let edge = NodeModel::edge("e");
        for _ in 0..10 {
            assert_eq!(sample_latency(&edge.latency, &mut rng), 0.040);
        }
        let m = LatencyModel::LognormalOffset { mu: 1.5, sigma: 0.0, offset_ms: 10.0 };
        assert!((sample_latency(&m, &mut rng) - (10.0 + 1.5f64.exp()) / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn tail_probability_closed_form() {
        let b = LatencyModel::LognormalOffset { mu: 4.0, sigma: 0.5, offset_ms: 14.0 };
        let p = b.tail_probability(50.0);
        assert!((p - 0.7976).abs() < 1e-3, "{p}");
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.959_964) - 0.975).abs() < 1e-6);
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        let a: u64 = stream_rng(7, 3, 8, 0).random();
        let b: u64 = stream_rng(7, 3, 8, 0).random();
        let c: u64 = stream_rng(7, 3, 9, 0).random();
        let d: u64 = stream_rng(7, 3, 8, 1).random();
        let e: u64 = stream_rng(8, 3, 8, 0).random();
        assert_eq!(a, b);
        assert!(a != c && a != d && a != e && c != d);
    }

    #[test]
    fn schedule_validation() {
        assert!(ConnectivitySchedule::new(vec![(1.0, 2.0), (1.5, 3.0)]).is_err());
        assert!(ConnectivitySchedule::new(vec![(2.0, 1.0)]).is_err());
        let s = ConnectivitySchedule::new(vec![(1.0, 2.0)]).unwrap();
        assert!(s.connected(0.99) && !s.connected(1.0) && !s.connected(1.99) && s.connected(2.0));
    }

    #[test]
    fn edge_policy_cases() {
        let hs: Vec<usize> = (6..=22).collect();
        assert_eq!(edge_policy(Some(8), true, &hs), Some(8));
        assert_eq!(edge_policy(Some(8), false, &hs), Some(22));
        assert_eq!(edge_policy(None, true, &hs), Some(22));
        assert_eq!(edge_policy(Some(8), true, &[]), None);
    }

    fn request(id: u64, issue: f64, h: usize) -> MpcRequest {
        MpcRequest {
            id,
            target_cycle: id,
            x_pred: nalgebra::DVector::from_vec(vec![0.5, 0.0]),
            sp: nalgebra::DVector::zeros(2),
            horizon: h,
            issue_time: issue,
            deadline: issue + 0.05,
        }
    }

    #[test]
    fn dispatch_outcomes() {
        let spec = crate::presets::example_spec(vec![5, 10], true).unwrap();
        let nodes = vec![
            NodeModel::cloud("ideal", LatencyModel::Fixed { offset_ms: 0.0 }),
            NodeModel::cloud("slow", LatencyModel::Fixed { offset_ms: 60.0 }),
            NodeModel::edge("edge"),
        ];
        let schedule = ConnectivitySchedule::new(vec![(1.0, 2.0)]).unwrap();
        let placed = vec![
            (request(0, 0.0, 5), 0),
            (request(1, 0.0, 5), 1),
            (request(2, 1.2, 5), 0),
            (request(3, 1.2, 10), 2),
            (request(4, 0.98, 5), 1),
        ];
        let out = dispatch(&spec, &placed, &nodes, &schedule, 3).unwrap();
        let kinds: Vec<Delivery> = out.iter().map(|r| r.outcome).collect();
        assert_eq!(
            kinds,
            vec![Delivery::Delivered, Delivery::Late, Delivery::Disconnected, Delivery::Delivered, Delivery::Disconnected]
        );
        assert!(out[0].response().is_some() && out[1].response().is_none());
        assert!(dispatch(&spec, &[(request(0, 0.0, 5), 7)], &nodes, &schedule, 3).is_err());
    }
}
