//! Central-difference checks through the full generator and critic stacks.

use wattgan::invert::init_latents;
use wattgan::net::{init_critic, init_generator, BnMode, Sequential};
use wattgan::Tensor3;

const STEP: f64 = 1e-7;

fn probe_loss(net: &Sequential, x: &Tensor3, mode: BnMode, probe: &[f64]) -> f64 {
    let (y, _) = net.forward(x, mode, "probe").unwrap();
    y.data().iter().zip(probe).map(|(a, b)| a * b).sum()
}

fn probe_vec(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 37 % 19) as f64 - 9.0) / 9.0).collect()
}

/// Checks a spread of input and parameter coordinates.
fn check(net: &Sequential, x: &Tensor3, mode: BnMode) {
    let (y, tape) = net.forward(x, mode, "probe").unwrap();
    let probe = probe_vec(y.data().len());
    let dy = Tensor3::from_vec(y.batch(), y.channels(), y.len(), probe.clone()).unwrap();
    let (dx, grads) = net.backward(&tape, &dy, true);
    let grads = grads.unwrap();

    let scale = dx
        .data()
        .iter()
        .chain(grads.iter().flatten())
        .fold(0.0f64, |m, g| m.max(g.abs()));
    let close = |analytic: f64, fd: f64, what: String| {
        let err = (analytic - fd).abs() / scale;
        assert!(err < 1e-5, "{what}: analytic {analytic} vs fd {fd}");
    };

    for i in (0..x.data().len()).step_by(x.data().len() / 7 + 1) {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        let fd = (probe_loss(net, &plus, mode, &probe) - probe_loss(net, &minus, mode, &probe)) / (2.0 * STEP);
        close(dx.data()[i], fd, format!("input {i}"));
    }
    for (p, g) in grads.iter().enumerate() {
        for i in (0..g.len()).step_by(g.len() / 3 + 1) {
            let mut plus = net.clone();
            plus.params_mut()[p][i] += STEP;
            let mut minus = net.clone();
            minus.params_mut()[p][i] -= STEP;
            let fd = (probe_loss(&plus, x, mode, &probe) - probe_loss(&minus, x, mode, &probe)) / (2.0 * STEP);
            close(g[i], fd, format!("param tensor {p} entry {i}"));
        }
    }
}

#[test]
fn generator_gradients_match_finite_differences() {
    let g = init_generator(3);
    let z = init_latents(3, 4).unwrap();
    check(&g.net, &z, BnMode::Active);
    check(&g.net, &z, BnMode::Static);
}

#[test]
fn critic_gradients_match_finite_differences() {
    let d = init_critic(5);
    let g = init_generator(6);
    let x = g.forward(&init_latents(3, 7).unwrap(), BnMode::Active).unwrap();
    check(&d.net, &x, BnMode::Active);
    check(&d.net, &x, BnMode::Static);
}
