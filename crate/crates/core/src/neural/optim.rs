//! SGD and Adam parameter updates.

use ndarray::{Array1, Array2};

use super::{Gradients, Layer, NetworkWeights};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer state: learning rate, and for Adam the first/second moment
/// accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    first_moment: Option<Moments>,
    second_moment: Option<Moments>,
}

#[derive(Debug, Clone)]
struct Moments {
    layers: Vec<Layer>,
    log_std: Option<Array1<f64>>,
}

impl Moments {
    fn zeros_like(weights: &NetworkWeights) -> Moments {
        Moments {
            layers: weights.layers.iter().map(Layer::zeros_like).collect(),
            log_std: weights.log_std.as_ref().map(|s| Array1::zeros(s.raw_dim())),
        }
    }
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            step: 0,
            first_moment: None,
            second_moment: None,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }
}

/// Apply one optimizer step in place. SGD: w -= lr * g. Adam: standard
/// bias-corrected update with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
pub fn optimizer_step(state: &mut OptimizerState, weights: &mut NetworkWeights, grads: &Gradients) {
    state.step += 1;
    match state.kind {
        OptimizerKind::Sgd => {
            for (l, g) in weights.layers.iter_mut().zip(&grads.layers) {
                l.weights.scaled_add(-state.learning_rate, &g.weights);
                l.bias.scaled_add(-state.learning_rate, &g.bias);
            }
            if let (Some(s), Some(g)) = (weights.log_std.as_mut(), grads.log_std.as_ref()) {
                s.scaled_add(-state.learning_rate, g);
            }
        }
        OptimizerKind::Adam => {
            if state.first_moment.is_none() {
                state.first_moment = Some(Moments::zeros_like(weights));
                state.second_moment = Some(Moments::zeros_like(weights));
            }
            let t = state.step as i32;
            let bc1 = 1.0 - ADAM_BETA1.powi(t);
            let bc2 = 1.0 - ADAM_BETA2.powi(t);
            let lr = state.learning_rate;
            let m = state.first_moment.as_mut().unwrap();
            let v = state.second_moment.as_mut().unwrap();

            let update =
                |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                };

            for ((wl, gl), (ml, vl)) in weights
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(m.layers.iter_mut().zip(v.layers.iter_mut()))
            {
                apply_elementwise2(&mut wl.weights, &gl.weights, &mut ml.weights, &mut vl.weights, update);
                apply_elementwise1(&mut wl.bias, &gl.bias, &mut ml.bias, &mut vl.bias, update);
            }
            if let (Some(ws), Some(gs)) = (weights.log_std.as_mut(), grads.log_std.as_ref()) {
                let ms = m.log_std.as_mut().unwrap();
                let vs = v.log_std.as_mut().unwrap();
                apply_elementwise1(ws, gs, ms, vs, update);
            }
        }
    }
}

fn apply_elementwise2(
    w: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    f: impl Fn(&mut f64, f64, &mut f64, &mut f64),
) {
    for (((w, g), m), v) in w.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
        f(w, *g, m, v);
    }
}

fn apply_elementwise1(
    w: &mut Array1<f64>,
    g: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    f: impl Fn(&mut f64, f64, &mut f64, &mut f64),
) {
    for (((w, g), m), v) in w.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
        f(w, *g, m, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Gradients, MlpSpec};
    use crate::rng::Stream;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn one_param_net(w: f64) -> NetworkWeights {
        NetworkWeights {
            layers: vec![Layer {
                weights: array![[w]],
                bias: array![0.0],
            }],
            log_std: None,
        }
    }

    fn one_param_grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![Layer {
                weights: array![[g]],
                bias: array![0.0],
            }],
            log_std: None,
        }
    }

    #[test]
    fn sgd_step_by_definition() {
        let mut net = one_param_net(1.0);
        let mut opt = OptimizerState::sgd(1e-2);
        optimizer_step(&mut opt, &mut net, &one_param_grad(0.5));
        assert_abs_diff_eq!(net.layers[0].weights[(0, 0)], 0.995, epsilon = 1e-15);
    }

    #[test]
    fn adam_first_step_matches_hand_recurrence() {
        // Step-by-step evaluation of the bias-corrected recurrence at t=1.
        for g in [0.5, -2.0, 1e-3] {
            let mut net = one_param_net(1.0);
            let mut opt = OptimizerState::adam(1e-3);
            optimizer_step(&mut opt, &mut net, &one_param_grad(g));
            let m = (1.0 - ADAM_BETA1) * g;
            let v = (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m / (1.0 - ADAM_BETA1);
            let v_hat = v / (1.0 - ADAM_BETA2);
            let expected = 1.0 - 1e-3 * m_hat / (v_hat.sqrt() + ADAM_EPS);
            assert_abs_diff_eq!(net.layers[0].weights[(0, 0)], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn adam_multi_step_matches_recurrence_oracle() {
        let grads = [0.4, -0.3, 0.9, 0.05];
        let mut net = one_param_net(0.7);
        let mut opt = OptimizerState::adam(2e-3);
        // Oracle run with explicit scalars.
        let (mut w, mut m, mut v) = (0.7, 0.0, 0.0);
        for (t, g) in grads.iter().enumerate() {
            optimizer_step(&mut opt, &mut net, &one_param_grad(*g));
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m / (1.0 - ADAM_BETA1.powi(t as i32 + 1));
            let v_hat = v / (1.0 - ADAM_BETA2.powi(t as i32 + 1));
            w -= 2e-3 * m_hat / (v_hat.sqrt() + ADAM_EPS);
            assert_abs_diff_eq!(net.layers[0].weights[(0, 0)], w, epsilon = 1e-15);
        }
        assert_eq!(opt.step, grads.len() as u64);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let spec = MlpSpec::new(vec![3, 4, 2]);
        let mut stream = Stream::seeded(1);
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut net = NetworkWeights::init(&spec, &mut stream).with_action_std(0.1);
            let before = net.clone();
            let mut opt = OptimizerState::new(kind, 1e-2);
            let zeros = Gradients::zeros_like(&net);
            optimizer_step(&mut opt, &mut net, &zeros);
            optimizer_step(&mut opt, &mut net, &zeros);
            assert_eq!(net, before);
            assert_eq!(opt.step, 2);
        }
    }

    #[test]
    fn moments_stay_finite() {
        let mut net = one_param_net(1.0);
        let mut opt = OptimizerState::adam(1e-3);
        for i in 0..1000 {
            optimizer_step(&mut opt, &mut net, &one_param_grad((i as f64).sin() * 10.0));
        }
        assert!(net.is_finite());
    }
}
