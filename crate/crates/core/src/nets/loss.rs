//! Joint training loss over the three networks and its analytic gradient.
//!
//! Per sample with weight `w`:
//! `w * [ (1/m) Σ_i CE(prior_i, a_i) + value_term(Ψ_v, y) + CE(dynamics, a_-) ]`.
//! Every log is floored at `ln(PROB_FLOOR)`; where the floor is active the
//! term is constant and contributes no gradient.

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, NetError, NetParams, PolicyNet};
use crate::game::GlobalState;
use crate::graph::NodeId;

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueLoss {
    /// Binary cross entropy against a soft label.
    #[serde(alias = "CE")]
    Ce,
    /// Squared error.
    #[serde(alias = "MSE")]
    Mse,
}

/// Which loss terms contribute; all three by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub prior: bool,
    pub value: bool,
    pub dynamics: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms {
        prior: true,
        value: true,
        dynamics: true,
    };
    pub const PRIOR: LossTerms = LossTerms {
        prior: true,
        value: false,
        dynamics: false,
    };
    pub const VALUE: LossTerms = LossTerms {
        prior: false,
        value: true,
        dynamics: false,
    };
    pub const DYNAMICS: LossTerms = LossTerms {
        prior: false,
        value: false,
        dynamics: true,
    };
}

/// Target distribution for a policy output.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyTarget {
    /// One-hot on the move at this index of the legal set.
    Action(usize),
    /// Arbitrary distribution aligned with the legal set.
    Distribution(Vec<f64>),
}

impl PolicyTarget {
    fn weight(&self, k: usize) -> f64 {
        match self {
            PolicyTarget::Action(j) => f64::from(u8::from(*j == k)),
            PolicyTarget::Distribution(d) => d[k],
        }
    }

    fn check(&self, len: usize) -> Result<(), NetError> {
        match self {
            PolicyTarget::Action(k) if *k >= len => Err(NetError::Shape(format!("target index {k} of {len}"))),
            PolicyTarget::Distribution(d) if d.len() != len => {
                Err(NetError::Shape(format!("target distribution of {} over {len} moves", d.len())))
            }
            PolicyTarget::Distribution(d) if !d.iter().all(|v| v.is_finite() && *v >= 0.0) => {
                Err(NetError::NonFinite("target distribution"))
            }
            _ => Ok(()),
        }
    }
}

/// One decision step's training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    pub state: GlobalState,
    pub resource_legal: Vec<Vec<NodeId>>,
    /// Per-resource target over `resource_legal[i]`.
    pub resource_targets: Vec<PolicyTarget>,
    pub attacker_legal: Vec<NodeId>,
    pub attacker_target: usize,
    pub value_target: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs {
    pub samples: Vec<LossSample>,
    pub value_loss: ValueLoss,
    pub terms: LossTerms,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub prior: f64,
    pub value: f64,
    pub dynamics: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.prior + self.value + self.dynamics
    }

    fn add(&mut self, other: LossBreakdown) {
        self.prior += other.prior;
        self.value += other.value;
        self.dynamics += other.dynamics;
    }
}

fn max_nll() -> f64 {
    -PROB_FLOOR.ln()
}

fn check_sample(params: &NetParams, s: &LossSample) -> Result<(), NetError> {
    params.check_state(&s.state)?;
    let m = s.state.resource_locs.len();
    if s.resource_legal.len() != m || s.resource_targets.len() != m {
        return Err(NetError::Shape(format!(
            "{m} resources but {} legal sets and {} targets",
            s.resource_legal.len(),
            s.resource_targets.len()
        )));
    }
    for (legal, target) in s.resource_legal.iter().zip(&s.resource_targets) {
        params.check_actions(legal)?;
        target.check(legal.len())?;
    }
    params.check_actions(&s.attacker_legal)?;
    if s.attacker_target >= s.attacker_legal.len() {
        return Err(NetError::Shape("attacker target index out of range".into()));
    }
    if !(s.weight.is_finite() && s.value_target.is_finite()) {
        return Err(NetError::NonFinite("loss sample"));
    }
    Ok(())
}

/// Forward-only loss; each term already carries the sample weights.
pub fn loss(params: &NetParams, inputs: &LossInputs) -> Result<LossBreakdown, NetError> {
    let mut total = LossBreakdown::default();
    for s in &inputs.samples {
        check_sample(params, s)?;
        if s.weight == 0.0 {
            continue;
        }
        total.add(sample_pass(params, s, inputs, None));
    }
    Ok(total)
}

/// Gradients of the weighted loss with respect to every parameter.
pub fn backward(params: &NetParams, inputs: &LossInputs) -> Result<NetParams, NetError> {
    Ok(loss_and_grad(params, inputs)?.1)
}

pub fn loss_and_grad(params: &NetParams, inputs: &LossInputs) -> Result<(LossBreakdown, NetParams), NetError> {
    let mut grad = params.zeros_like();
    let mut total = LossBreakdown::default();
    for s in &inputs.samples {
        check_sample(params, s)?;
        if s.weight == 0.0 {
            continue;
        }
        total.add(sample_pass(params, s, inputs, Some(&mut grad)));
    }
    if !grad.is_finite() {
        return Err(NetError::NonFinite("gradient"));
    }
    Ok((total, grad))
}

fn sample_pass(params: &NetParams, s: &LossSample, inputs: &LossInputs, mut grad: Option<&mut NetParams>) -> LossBreakdown {
    let mut out = LossBreakdown::default();
    let w = s.weight;
    if inputs.terms.prior {
        let m = s.state.resource_locs.len() as f64;
        for (i, legal) in s.resource_legal.iter().enumerate() {
            let ego = s.state.resource_locs[i];
            let x = params.features(&s.state, Some(ego));
            let nll = policy_term(params, PolicyNet::Prior, &x, legal, &s.resource_targets[i], w / m, grad.as_deref_mut(), &s.state, Some(ego));
            out.prior += w * nll / m;
        }
    }
    if !(inputs.terms.value || inputs.terms.dynamics) {
        return out;
    }
    let x = params.features(&s.state, None);
    if inputs.terms.dynamics {
        let nll = policy_term(params, PolicyNet::Dynamics, &x, &s.attacker_legal, &PolicyTarget::Action(s.attacker_target), w, grad.as_deref_mut(), &s.state, None);
        out.dynamics += w * nll;
    }
    if inputs.terms.value {
        let (enc, act, z) = params.value_pass(&x);
        let y = s.value_target;
        let (value, dz) = match inputs.value_loss {
            ValueLoss::Ce => {
                // -log p = softplus(-z), -log(1-p) = softplus(z)
                let (pos, neg) = (softplus(-z), softplus(z));
                let p = sigmoid(z);
                let mut dz = 0.0;
                if pos < max_nll() {
                    dz -= y * (1.0 - p);
                }
                if neg < max_nll() {
                    dz += (1.0 - y) * p;
                }
                (y * pos.min(max_nll()) + (1.0 - y) * neg.min(max_nll()), dz)
            }
            ValueLoss::Mse => {
                let p = sigmoid(z);
                ((p - y) * (p - y), 2.0 * (p - y) * p * (1.0 - p))
            }
        };
        out.value += w * value;
        if let Some(g) = grad.as_deref_mut() {
            let d_logit = [w * dz];
            let mut d_act = vec![0.0; act.len()];
            params.value_head.backward(&act, &d_logit, &mut g.value_head, Some(&mut d_act));
            for (d, &e) in d_act.iter_mut().zip(&enc.out) {
                if e <= 0.0 {
                    *d = 0.0;
                }
            }
            let mut dx = vec![0.0; x.len()];
            params.value_state.backward(&x, &enc, &d_act, &mut g.value_state, &mut dx);
            params.scatter_features(&s.state, None, &dx, g);
        }
    }
    out
}

/// Cross entropy `-Σ_k t_k log p_k` against `target` (each log floored) and,
/// when requested, its gradient scaled by `scale`.
#[allow(clippy::too_many_arguments)]
fn policy_term(
    params: &NetParams,
    net: PolicyNet,
    x: &[f64],
    legal: &[NodeId],
    target: &PolicyTarget,
    scale: f64,
    grad: Option<&mut NetParams>,
    state: &GlobalState,
    ego: Option<NodeId>,
) -> f64 {
    let pass = params.policy_pass(net, x, legal);
    let mut nll = 0.0;
    // target mass on moves whose log is above the floor
    let mut live = vec![0.0; legal.len()];
    for (k, slot) in live.iter_mut().enumerate() {
        let t = target.weight(k);
        if t == 0.0 {
            continue;
        }
        let term = pass.log_norm - pass.logits[k];
        if term >= max_nll() {
            nll += t * max_nll();
        } else {
            nll += t * term;
            *slot = t;
        }
    }
    let live_total: f64 = live.iter().sum();
    if live_total == 0.0 {
        return nll;
    }
    let Some(g) = grad else { return nll };
    let (encoder, action) = params.policy_layers(net);
    let ds = encoder.output.outputs;
    let mut d_state = vec![0.0; ds];
    let mut d_embed = vec![0.0; params.dims.embed_dim];
    for (k, (&a, code)) in legal.iter().zip(&pass.action_codes).enumerate() {
        let d_logit = scale * (live_total * pass.probs[k] - live[k]);
        if d_logit == 0.0 {
            continue;
        }
        for (d, &c) in d_state.iter_mut().zip(code) {
            *d += d_logit * c;
        }
        let d_code: Vec<f64> = pass.enc.out.iter().map(|&f| d_logit * f).collect();
        d_embed.fill(0.0);
        let g_action = match net {
            PolicyNet::Prior => &mut g.prior_action,
            PolicyNet::Dynamics => &mut g.dynamics_action,
        };
        action.backward(params.node_embedding(a), &d_code, g_action, Some(&mut d_embed));
        let d = params.dims.embed_dim;
        for (e, &v) in g.embedding[a * d..(a + 1) * d].iter_mut().zip(&d_embed) {
            *e += v;
        }
    }
    let mut dx = vec![0.0; x.len()];
    let g_encoder = match net {
        PolicyNet::Prior => &mut g.prior_state,
        PolicyNet::Dynamics => &mut g.dynamics_state,
    };
    encoder.backward(x, &pass.enc, &d_state, g_encoder, &mut dx);
    params.scatter_features(state, ego, &dx, g);
    nll
}
