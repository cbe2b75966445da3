use fdris::nnet::{
    init_glorot, Activation, Layer, LayerNormParams, Parameters, Sequential, Tape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(rng: &mut ChaCha8Rng) -> Sequential {
    let mut ln = LayerNormParams::new(6);
    for g in ln.gain.iter_mut() {
        *g = rng.random_range(0.5..1.5);
    }
    for b in ln.offset.iter_mut() {
        *b = rng.random_range(-0.5..0.5);
    }
    let mut d1 = init_glorot(4, 6, rng);
    d1.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    let mut d2 = init_glorot(6, 5, rng);
    d2.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    let d3 = init_glorot(5, 5, rng);
    let d4 = init_glorot(5, 1, rng);
    Sequential::new(vec![
        Layer::Dense(d1),
        Layer::LayerNorm(ln),
        Layer::Act(Activation::Relu),
        Layer::Dense(d2),
        Layer::Act(Activation::Tanh),
        Layer::Dense(d3),
        Layer::Act(Activation::Softmax),
        Layer::Dense(d4),
    ])
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-6
}

#[test]
fn analytic_gradients_match_central_differences() {
    let h = 1e-5;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();

        let mut tape = Tape::new();
        let y = net.forward(&x, &mut tape).unwrap();
        assert_eq!(y.len(), 1);
        let mut grads = net.zeros_like();
        let dx = net.backward(&tape, &[1.0], Some(&mut grads)).unwrap();

        let f = |n: &Sequential, x: &[f64]| n.apply(x).unwrap()[0];

        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let num = (f(&net, &xp) - f(&net, &xm)) / (2.0 * h);
            assert!(close(dx[i], num), "seed {seed} input {i}: {} vs {num}", dx[i]);
        }

        let analytic = grads.flatten();
        let total = analytic.len();
        for k in 0..total {
            let perturb = |delta: f64| {
                let mut n = net.clone();
                let mut seen = 0;
                for t in n.tensors_mut() {
                    if k < seen + t.len() {
                        t[k - seen] += delta;
                        break;
                    }
                    seen += t.len();
                }
                f(&n, &x)
            };
            let num = (perturb(h) - perturb(-h)) / (2.0 * h);
            assert!(
                close(analytic[k], num),
                "seed {seed} param {k}: {} vs {num}",
                analytic[k]
            );
        }
    }
}

#[test]
fn replayed_forward_reproduces_tape() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = random_net(&mut rng);
    let x = [0.3, -0.1, 1.2, 0.0];
    let mut a = Tape::new();
    let mut b = Tape::new();
    let ya = net.forward(&x, &mut a).unwrap();
    let yb = net.forward(&x, &mut b).unwrap();
    assert_eq!(ya[0].to_bits(), yb[0].to_bits());
    assert_eq!(a, b);
}
