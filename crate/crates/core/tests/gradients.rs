use mad_core::diffnet::{polyak_update, Graph, Mlp, Tensor};
use mad_core::quasimetric::QuasimetricSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

struct Case {
    net: Mlp,
    inputs: Tensor,
    quasimetric: Option<QuasimetricSpec>,
    target: f64,
}

fn random_case(rng: &mut ChaCha8Rng, with_quasimetric: bool) -> Case {
    let input = rng.random_range(1..=4);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2))
        .map(|_| rng.random_range(1..=8))
        .collect();
    let latent = rng.random_range(1..=8);
    let net = Mlp::new(input, &hidden, latent, rng).unwrap();
    let rows = 2 * rng.random_range(1..=4);
    let data = (0..rows * input)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let quasimetric = with_quasimetric.then(|| match rng.random_range(0..5) {
        0 => QuasimetricSpec::simple(rng.random_range(0.0..=1.0)).unwrap(),
        1 => QuasimetricSpec::Max,
        2 => QuasimetricSpec::Sum,
        3 => QuasimetricSpec::Mean,
        _ => QuasimetricSpec::convex(vec![
            (0.4, QuasimetricSpec::Max),
            (0.6, QuasimetricSpec::Mean),
        ])
        .unwrap(),
    });
    Case {
        net,
        inputs: Tensor::new(vec![rows, input], data).unwrap(),
        quasimetric,
        target: rng.random_range(0.0..2.0),
    }
}

/// Plain-forward loss: mean squared output, or mean `(d(φ(a), φ(b)) − t)²`
/// with `a` the first half of the rows and `b` the second.
fn plain_loss(case: &Case, net: &Mlp) -> f64 {
    let out = net.forward(&case.inputs).unwrap();
    match &case.quasimetric {
        None => out.data().iter().map(|v| v * v).sum::<f64>() / out.len() as f64,
        Some(q) => {
            let half = out.rows() / 2;
            let d: Vec<f64> = (0..half)
                .map(|i| q.distance(out.row(i), out.row(half + i)).unwrap())
                .collect();
            d.iter().map(|v| (v - case.target).powi(2)).sum::<f64>() / half as f64
        }
    }
}

fn graph_gradients(case: &Case) -> Vec<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(case.inputs.clone()).unwrap();
    let (out, params) = case.net.record(&mut g, x).unwrap();
    let loss = match &case.quasimetric {
        None => {
            let sq = g.square(out).unwrap();
            g.mean(sq).unwrap()
        }
        Some(q) => {
            let half = case.inputs.rows() / 2;
            let a = g.gather_rows(out, &(0..half).collect::<Vec<_>>()).unwrap();
            let b = g
                .gather_rows(out, &(half..2 * half).collect::<Vec<_>>())
                .unwrap();
            let d = q.record(&mut g, a, b).unwrap();
            let e = g.offset_scalar(d, -case.target).unwrap();
            let sq = g.square(e).unwrap();
            g.mean(sq).unwrap()
        }
    };
    let grads = g.backward(loss).unwrap();
    params.collect(&grads)
}

fn numeric(case: &Case, tensor: usize, index: usize, h: f64) -> f64 {
    let mut plus = case.net.clone();
    let mut minus = case.net.clone();
    plus.params_mut()[tensor].data_mut()[index] += h;
    minus.params_mut()[tensor].data_mut()[index] -= h;
    (plain_loss(case, &plus) - plain_loss(case, &minus)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Returns (checked, skipped-at-kink). A coordinate counts as a kink when two
/// step sizes disagree with each other, which a smooth function cannot do.
fn check_case(case: &Case) -> (usize, usize) {
    let analytic = graph_gradients(case);
    let shapes: Vec<usize> = case.net.params().iter().map(|p| p.len()).collect();
    let (mut checked, mut skipped) = (0, 0);
    for (t, &n) in shapes.iter().enumerate() {
        for i in 0..n {
            let a = analytic[t].data()[i];
            let fd = numeric(case, t, i, H);
            if rel_err(a, fd) < REL_TOL {
                checked += 1;
                continue;
            }
            let fine = numeric(case, t, i, H / 10.0);
            assert!(
                rel_err(fd, fine) > REL_TOL,
                "parameter {t}[{i}]: analytic {a} vs finite difference {fd} (smooth region)"
            );
            skipped += 1;
        }
    }
    (checked, skipped)
}

#[test]
fn random_networks_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut checked, mut skipped) = (0, 0);
    for _ in 0..100 {
        let (c, s) = check_case(&random_case(&mut rng, false));
        checked += c;
        skipped += s;
    }
    assert!(
        skipped * 100 <= checked,
        "{skipped} kinks among {checked} checks"
    );
}

#[test]
fn encoder_quasimetric_compositions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut checked, mut skipped) = (0, 0);
    for _ in 0..100 {
        let (c, s) = check_case(&random_case(&mut rng, true));
        checked += c;
        skipped += s;
    }
    assert!(
        skipped * 100 <= checked,
        "{skipped} kinks among {checked} checks"
    );
}

#[test]
fn polyak_contracts_by_exact_factor() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for beta in [0.005, 0.1, 0.5, 0.9] {
        let online = Mlp::new(3, &[6, 5], 4, &mut rng).unwrap();
        let mut target = Mlp::new(3, &[6, 5], 4, &mut rng).unwrap();
        let before = target.distance_sq(&online).unwrap().sqrt();
        polyak_update(&mut target, &online, beta).unwrap();
        let after = target.distance_sq(&online).unwrap().sqrt();
        assert!(
            (after - (1.0 - beta) * before).abs() <= 1e-12 * before,
            "beta {beta}"
        );
    }
}
