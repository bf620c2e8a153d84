use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;

use super::network::{Cache, Gradients};
use super::{RiskNetwork, TrainConfig};
use crate::em::Frozen;
use crate::hazard::Baseline;
use crate::math::{exp, sqrt};
use crate::posterior::FrailtyPosterior;
use crate::risk::NeuralRisk;
use crate::rng::Rng;
use crate::{Dataset, Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Loss and its gradient with respect to every network parameter and
/// `xi = log theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub networks: [Gradients; 3],
    pub xi: f64,
}

/// `-Q/n + l2 * sum(w^2)` with `h_g(x) = F_g(x) - F_g(0)` and
/// `theta = exp(xi)`; the posterior moments and baselines are frozen.
pub fn loss(
    data: &Dataset,
    posteriors: &[FrailtyPosterior],
    baselines: &[Baseline; 3],
    risk: &NeuralRisk,
    xi: f64,
    l2: f64,
) -> Result<f64> {
    let frozen = Frozen::new(data, posteriors, baselines)?;
    let scores = risk.score_all_unchecked(data);
    finite(objective(&frozen, &scores, risk, xi, l2))
}

pub fn loss_gradient(
    data: &Dataset,
    posteriors: &[FrailtyPosterior],
    baselines: &[Baseline; 3],
    risk: &NeuralRisk,
    xi: f64,
    l2: f64,
) -> Result<LossGradient> {
    let frozen = Frozen::new(data, posteriors, baselines)?;
    let xs: Vec<&[f64]> = data.covariates().collect();
    let mut grads = risk.networks.each_ref().map(Gradients::zeros_like);
    let mut cache = Cache::default();
    let (loss, xi_grad) = pass(&frozen, &xs, risk, xi, l2, 0.0, None, &mut grads, &mut cache)?;
    Ok(LossGradient {
        loss,
        networks: grads,
        xi: xi_grad,
    })
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss)
    }
}

fn squared_weights(risk: &NeuralRisk) -> f64 {
    risk.networks
        .iter()
        .flat_map(|n| n.layers())
        .flat_map(|l| l.weights())
        .map(|w| w * w)
        .sum()
}

fn objective(frozen: &Frozen, scores: &[[f64; 3]], risk: &NeuralRisk, xi: f64, l2: f64) -> f64 {
    let n = frozen.len() as f64;
    -frozen.q(scores, exp(xi)).total / n + l2 * squared_weights(risk)
}

/// One forward/backward sweep. Gradients are accumulated into `grads`, which
/// must be zeroed by the caller; returns the loss and `d loss / d xi`.
#[allow(clippy::too_many_arguments)]
fn pass(
    frozen: &Frozen,
    xs: &[&[f64]],
    risk: &NeuralRisk,
    xi: f64,
    l2: f64,
    dropout: f64,
    mut rng: Option<&mut Rng>,
    grads: &mut [Gradients; 3],
    cache: &mut Cache,
) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let zero = vec![0.0; risk.input_dim()];
    let mut q = frozen.event_constant.iter().sum::<f64>();
    for g in 0..3 {
        let net = &risk.networks[g];
        let anchor = net.forward_train(&zero, 0.0, None, cache);
        let mut anchor_grad = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let h = net.forward_train(x, dropout, rng.as_deref_mut(), cache) - anchor;
            q += frozen.q_h(i, g, h);
            let d = -frozen.dq_dh(i, g, h) / n;
            net.backward(cache, d, &mut grads[g]);
            anchor_grad -= d;
        }
        net.forward_train(&zero, 0.0, None, cache);
        net.backward(cache, anchor_grad, &mut grads[g]);
    }
    let theta = exp(xi);
    q += frozen.q4(theta);
    let loss = -q / n + l2 * squared_weights(risk);
    for (net, g) in risk.networks.iter().zip(grads.iter_mut()) {
        for (layer, lg) in net.layers().iter().zip(&mut g.layers) {
            for (gw, w) in lg.weights.iter_mut().zip(layer.weights()) {
                *gw += 2.0 * l2 * w;
            }
        }
        if let Some(out) = g.layers.last_mut() {
            out.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
    let r = 1.0 / theta;
    let xi_grad = r / n * frozen.dq4_dr(r)?;
    Ok((finite(loss)?, xi_grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Loss at the start of each epoch (prediction-mode forward pass).
    pub losses: Vec<f64>,
    pub best_loss: f64,
    /// The loss became non-finite; the best finite parameters were kept.
    pub diverged: bool,
}

/// Full-batch Adam over the three networks and `xi`. Moment estimates
/// persist across calls so the optimizer state carries over EM iterations.
pub struct NeuralTrainer {
    config: TrainConfig,
    m: [Gradients; 3],
    v: [Gradients; 3],
    m_xi: f64,
    v_xi: f64,
    step: i32,
    rng: Rng,
    cache: Cache,
}

impl NeuralTrainer {
    pub fn new(networks: &[RiskNetwork; 3], config: TrainConfig, seed: u64) -> Self {
        let zeros = networks.each_ref().map(Gradients::zeros_like);
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            m_xi: 0.0,
            v_xi: 0.0,
            step: 0,
            rng: Rng::seed_from_u64(seed),
            cache: Cache::default(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Runs `config.epochs` Adam steps. The loss separates into a network
    /// part and a `xi` part, so each block is left at its own best value.
    pub(crate) fn train(&mut self, data: &Dataset, frozen: &Frozen, risk: &mut NeuralRisk, xi: &mut f64) -> Result<TrainOutcome> {
        let xs: Vec<&[f64]> = data.covariates().collect();
        let cfg = self.config.clone();
        let n = frozen.len() as f64;
        let mut grads = risk.networks.each_ref().map(Gradients::zeros_like);
        let theta_part = |xi: f64| -frozen.q4(exp(xi)) / n;
        let evaluate = |risk: &NeuralRisk, xi: f64| -> f64 {
            let scores = risk.score_all_unchecked(data);
            objective(frozen, &scores, risk, xi, cfg.l2)
        };

        let mut losses = Vec::with_capacity(cfg.epochs + 1);
        let start = evaluate(risk, *xi);
        if !start.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let mut best_net = (start - theta_part(*xi), risk.clone());
        let mut best_xi = (theta_part(*xi), *xi);
        let mut diverged = false;
        let mut current = start;
        let mut track = |loss: f64, risk: &NeuralRisk, xi: f64| {
            let t = theta_part(xi);
            if loss - t < best_net.0 {
                best_net = (loss - t, risk.clone());
            }
            if t < best_xi.0 {
                best_xi = (t, xi);
            }
        };
        for epoch in 0..cfg.epochs {
            grads.iter_mut().for_each(Gradients::clear);
            let rng = (cfg.dropout > 0.0).then_some(&mut self.rng);
            let swept = pass(frozen, &xs, risk, *xi, cfg.l2, cfg.dropout, rng, &mut grads, &mut self.cache);
            let Ok((train_loss, xi_grad)) = swept else {
                diverged = true;
                break;
            };
            if cfg.dropout == 0.0 {
                current = train_loss;
            } else if epoch > 0 {
                current = evaluate(risk, *xi);
            }
            if !current.is_finite() {
                diverged = true;
                break;
            }
            losses.push(current);
            track(current, risk, *xi);
            self.adam(risk, xi, &grads, xi_grad);
        }
        let last = if diverged { f64::NAN } else { evaluate(risk, *xi) };
        if last.is_finite() {
            losses.push(last);
            track(last, risk, *xi);
        } else {
            diverged = true;
        }
        *risk = best_net.1;
        *xi = best_xi.1;
        Ok(TrainOutcome {
            losses,
            best_loss: best_net.0 + best_xi.0,
            diverged,
        })
    }

    fn adam(&mut self, risk: &mut NeuralRisk, xi: &mut f64, grads: &[Gradients; 3], xi_grad: f64) {
        self.step += 1;
        let lr = self.config.learning_rate;
        let c1 = 1.0 - libm::pow(BETA1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(BETA2, f64::from(self.step));
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / (sqrt(*v / c2) + EPSILON);
        };
        for g in 0..3 {
            let depth = risk.networks[g].layers().len();
            let layers = risk.networks[g].layers_mut();
            for (l, layer) in layers.iter_mut().enumerate() {
                let (gl, ml, vl) = (&grads[g].layers[l], &mut self.m[g].layers[l], &mut self.v[g].layers[l]);
                for k in 0..layer.weights.len() {
                    update(&mut layer.weights[k], gl.weights[k], &mut ml.weights[k], &mut vl.weights[k]);
                }
                if l + 1 == depth {
                    continue;
                }
                for k in 0..layer.bias.len() {
                    update(&mut layer.bias[k], gl.bias[k], &mut ml.bias[k], &mut vl.bias[k]);
                }
            }
        }
        if self.config.train_theta {
            let (mut m, mut v) = (self.m_xi, self.v_xi);
            update(xi, xi_grad, &mut m, &mut v);
            self.m_xi = m;
            self.v_xi = v;
        }
    }
}

/// Trains copies of `risk` and `xi` for `config.epochs` epochs with the
/// posteriors and baselines frozen.
pub fn train_step(
    data: &Dataset,
    posteriors: &[FrailtyPosterior],
    baselines: &[Baseline; 3],
    risk: &NeuralRisk,
    xi: f64,
    config: &TrainConfig,
) -> Result<(NeuralRisk, f64, TrainOutcome)> {
    config.validate()?;
    if risk.input_dim() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: risk.input_dim(),
            found: data.p(),
        });
    }
    let frozen = Frozen::new(data, posteriors, baselines)?;
    let mut trainer = NeuralTrainer::new(&risk.networks, config.clone(), config.seed);
    let (mut risk, mut xi) = (risk.clone(), xi);
    let outcome = trainer.train(data, &frozen, &mut risk, &mut xi)?;
    Ok((risk, xi, outcome))
}
