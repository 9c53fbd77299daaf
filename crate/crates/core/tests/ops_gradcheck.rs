//! Finite-difference verification of every differentiable graph op on
//! random inputs: rel. err < 1e-6 at eps = 1e-5. LeakyReLU inputs are kept
//! away from the kink, and BCE predictions away from the clamp bounds,
//! since neither function is differentiable there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bi_isca::gradcheck::finite_diff_check;
use bi_isca::graph::{Graph, NodeId};
use bi_isca::tensor::{Param, Tensor};
use bi_isca::NumericError;

const TOL: f64 = 1e-6;
const EPS: f64 = 1e-5;

fn param(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Param {
    let numel = shape.iter().product();
    let values = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Param::new(Tensor::new(shape, values).unwrap())
}

/// Values bounded away from zero, for kinked activations.
fn param_off_kink(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Param {
    let numel = shape.iter().product();
    let values = (0..numel)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.1..1.0)
        })
        .collect();
    Param::new(Tensor::new(shape, values).unwrap())
}

fn check(
    name: &str,
    params: &[(String, Param)],
    build: impl FnMut(&mut Graph) -> Result<NodeId, NumericError>,
) {
    let mut build = build;
    let report = finite_diff_check(params, EPS, |with_grad| {
        let mut g = Graph::new();
        let out = build(&mut g)?;
        let loss = if g.shape(out).iter().product::<usize>() == 1 {
            out
        } else if g.shape(out).len() == 2 {
            let flat = g.flatten(out)?;
            // tanh keeps the reduction non-trivial so gradients differ per
            // element.
            let t = g.tanh(flat);
            g.sum(t)
        } else {
            let t = g.tanh(out);
            g.sum(t)
        };
        if with_grad {
            g.backward(loss)?;
        }
        Ok(g.scalar_value(loss))
    })
    .unwrap();
    assert!(
        report.max_relative_error < TOL,
        "{name}: max rel err {:.3e} at {}",
        report.max_relative_error,
        report.worst_parameter
    );
}

fn named(pairs: Vec<(&str, Param)>) -> Vec<(String, Param)> {
    pairs.into_iter().map(|(n, p)| (n.to_string(), p)).collect()
}

#[test]
fn every_op_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);

    // matmul
    let a = param(&mut rng, vec![3, 4]);
    let b = param(&mut rng, vec![4, 2]);
    let params = named(vec![("a", a.clone()), ("b", b.clone())]);
    check("matmul", &params, |g| {
        let an = g.param(&a);
        let bn = g.param(&b);
        g.matmul(an, bn)
    });

    // matvec
    let m = param(&mut rng, vec![3, 5]);
    let v = param(&mut rng, vec![5]);
    let params = named(vec![("m", m.clone()), ("v", v.clone())]);
    check("matvec", &params, |g| {
        let mn = g.param(&m);
        let vn = g.param(&v);
        g.matvec(mn, vn)
    });

    // add, mul (same-shape element-wise)
    let x = param(&mut rng, vec![6]);
    let y = param(&mut rng, vec![6]);
    let params = named(vec![("x", x.clone()), ("y", y.clone())]);
    check("add", &params, |g| {
        let xn = g.param(&x);
        let yn = g.param(&y);
        g.add(xn, yn)
    });
    check("mul", &params, |g| {
        let xn = g.param(&x);
        let yn = g.param(&y);
        g.mul(xn, yn)
    });

    // scale
    let params = named(vec![("x", x.clone())]);
    check("scale", &params, |g| {
        let xn = g.param(&x);
        Ok(g.scale(xn, -1.7))
    });

    // dot
    let params = named(vec![("x", x.clone()), ("y", y.clone())]);
    check("dot", &params, |g| {
        let xn = g.param(&x);
        let yn = g.param(&y);
        g.dot(xn, yn)
    });

    // scale_rows
    let m = param(&mut rng, vec![4, 3]);
    let s = param(&mut rng, vec![4]);
    let params = named(vec![("m", m.clone()), ("s", s.clone())]);
    check("scale_rows", &params, |g| {
        let mn = g.param(&m);
        let sn = g.param(&s);
        g.scale_rows(mn, sn)
    });

    // sigmoid, tanh
    let params = named(vec![("x", x.clone())]);
    check("sigmoid", &params, |g| {
        let xn = g.param(&x);
        Ok(g.sigmoid(xn))
    });
    check("tanh", &params, |g| {
        let xn = g.param(&x);
        Ok(g.tanh(xn))
    });

    // leaky_relu, away from the kink
    let k = param_off_kink(&mut rng, vec![8]);
    let params = named(vec![("k", k.clone())]);
    check("leaky_relu", &params, |g| {
        let kn = g.param(&k);
        g.leaky_relu(kn, 0.3)
    });

    // conv1d_valid
    let input = param(&mut rng, vec![6, 3]);
    let kernels = param(&mut rng, vec![2, 6]);
    let bias = param(&mut rng, vec![2]);
    let params = named(vec![
        ("input", input.clone()),
        ("kernels", kernels.clone()),
        ("bias", bias.clone()),
    ]);
    check("conv1d_valid", &params, |g| {
        let i = g.param(&input);
        let kn = g.param(&kernels);
        let bn = g.param(&bias);
        g.conv1d_valid(i, kn, bn, 2)
    });

    // concat
    let p1 = param(&mut rng, vec![3]);
    let p2 = param(&mut rng, vec![4]);
    let params = named(vec![("p1", p1.clone()), ("p2", p2.clone())]);
    check("concat", &params, |g| {
        let a = g.param(&p1);
        let b = g.param(&p2);
        g.concat(&[a, b])
    });

    // flatten (via a matrix input)
    let m = param(&mut rng, vec![3, 4]);
    let params = named(vec![("m", m.clone())]);
    check("flatten", &params, |g| {
        let mn = g.param(&m);
        g.flatten(mn)
    });

    // stack_rows + row
    let r1 = param(&mut rng, vec![4]);
    let r2 = param(&mut rng, vec![4]);
    let params = named(vec![("r1", r1.clone()), ("r2", r2.clone())]);
    check("stack_rows", &params, |g| {
        let a = g.param(&r1);
        let b = g.param(&r2);
        g.stack_rows(&[a, b])
    });
    check("row", &params, |g| {
        let a = g.param(&r1);
        let b = g.param(&r2);
        let stacked = g.stack_rows(&[a, b])?;
        g.row(stacked, 1)
    });

    // gather_mean_rows, with a repeated index
    let table = param(&mut rng, vec![5, 3]);
    let params = named(vec![("table", table.clone())]);
    check("gather_mean_rows", &params, |g| {
        let t = g.param(&table);
        g.gather_mean_rows(t, &[0, 2, 2, 4])
    });

    // sum
    let params = named(vec![("x", x.clone())]);
    check("sum", &params, |g| {
        let xn = g.param(&x);
        Ok(g.sum(xn))
    });

    // softmax
    let params = named(vec![("x", x.clone())]);
    check("softmax", &params, |g| {
        let xn = g.param(&x);
        g.softmax(xn)
    });

    // bce_mean over predictions kept inside (0,1) by a sigmoid
    let logits = param(&mut rng, vec![5]);
    let labels = [1.0, 0.0, 1.0, 1.0, 0.0];
    let params = named(vec![("logits", logits.clone())]);
    check("bce_mean", &params, |g| {
        let ln = g.param(&logits);
        let preds = g.sigmoid(ln);
        g.bce_mean(preds, &labels)
    });
}
