//! Central-difference gradient oracle.
//!
//! `finite_diff_grad` never touches the reverse-mode code path: it only needs
//! a scalar-valued function of a flat parameter vector. `check_all_ops` runs
//! the whole op catalog against it at random points; both the unit tests and
//! the verification suite call it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DenseArray, Graph, GraphBuilder, NodeId};
use crate::error::Result;

/// Central differences of `f` at `params` with step `h`, one coordinate at a
/// time. O(2·len) evaluations of `f`.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut p = params.to_vec();
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p)?;
        p[i] = orig - h;
        let fm = f(&p)?;
        p[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Error measure used by every gradient check: relative, with an absolute
/// floor of 1 so that near-zero reference coordinates do not divide away the
/// tolerance.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// Result of checking one op kind at many random points.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub op: String,
    pub points: usize,
    pub max_rel_err: f64,
}

struct Case {
    name: &'static str,
    // Builds the graph and the scalar seed node; called once per point so
    // each point also gets a fresh random cotangent constant.
    build: fn(&mut ChaCha8Rng) -> (Graph, NodeId),
    // Samples a parameter vector for the built graph.
    sample: fn(&mut ChaCha8Rng, usize) -> Vec<f64>,
}

fn u(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Random values in ±[0.1, 1]: generic smooth-op inputs, bounded away from
/// the ReLU kink and from zero denominators/norms.
fn sample_signed(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let mag = u(rng, 0.1, 1.0);
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Random values in [0.5, 2]: inputs for log and divisor operands.
fn sample_positive(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| u(rng, 0.5, 2.0)).collect()
}

fn random_cotangent(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseArray {
    let len = shape.iter().product();
    DenseArray::from_vec(shape, sample_signed(rng, len)).unwrap()
}

/// Attach a random linear functional so the seeded cotangent is not all-ones.
fn scalarize(gb: &mut GraphBuilder, rng: &mut ChaCha8Rng, y: NodeId, shape: &[usize]) -> NodeId {
    if shape.is_empty() {
        gb.scale(y, u(rng, 0.2, 2.0))
    } else {
        let r = gb.constant(random_cotangent(rng, shape));
        let m = gb.mul(y, r).unwrap();
        gb.sum_all(m)
    }
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let b = gb.param("b", &[4, 2]);
                let y = gb.matmul(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 2]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "matmul_nt",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let b = gb.param("b", &[5, 4]);
                let y = gb.matmul_nt(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 5]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "add",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let b = gb.param("b", &[3, 4]);
                let y = gb.add(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "add_row_broadcast",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let b = gb.param("b", &[4]);
                let y = gb.add(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "scale",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.scale(a, u(rng, -2.0, 2.0));
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "relu",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.relu(a);
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            // sample_signed keeps |x| >= 0.1, far from the kink at h = 1e-5
            sample: sample_signed,
        },
        Case {
            name: "exp",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.exp(a);
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "log",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.log(a);
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_positive,
        },
        Case {
            name: "mul",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let b = gb.param("b", &[3, 4]);
                let y = gb.mul(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "div",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let b = gb.param("b", &[3, 4]);
                let y = gb.div(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_positive,
        },
        Case {
            name: "div_scalar",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let b = gb.param("b", &[]);
                let y = gb.div(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            sample: sample_positive,
        },
        Case {
            name: "sum_all",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.sum_all(a);
                let z = scalarize(&mut gb, rng, y, &[]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "mean_all",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.mean_all(a);
                let z = scalarize(&mut gb, rng, y, &[]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "sum_rows",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.sum_rows(a).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
        Case {
            name: "l2_normalize_rows",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[3, 4]);
                let y = gb.l2_normalize_rows(a).unwrap();
                let z = scalarize(&mut gb, rng, y, &[3, 4]);
                (gb.build(), z)
            },
            // sample_signed keeps every row norm >= 0.1, far from the
            // degenerate-row fallback
            sample: sample_signed,
        },
        Case {
            name: "dot",
            build: |rng| {
                let mut gb = GraphBuilder::new();
                let a = gb.param("a", &[5]);
                let b = gb.param("b", &[5]);
                let y = gb.dot(a, b).unwrap();
                let z = scalarize(&mut gb, rng, y, &[]);
                (gb.build(), z)
            },
            sample: sample_signed,
        },
    ]
}

/// Check every op's backward against central differences at `points` random
/// parameter points each. Returns one record per op kind, worst error kept.
pub fn check_all_ops(points: usize, h: f64, seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::new();
    for case in cases() {
        let mut max_err = 0.0f64;
        for _ in 0..points {
            let (graph, z) = (case.build)(&mut rng);
            let params = (case.sample)(&mut rng, graph.param_len());
            let eval = graph.forward(&params, &[])?;
            let got = graph.backward(&eval, z)?;
            let want = finite_diff_grad(
                |p| Ok(graph.forward(p, &[])?.value(z).item()),
                &params,
                h,
            )?;
            for (g, w) in got.iter().zip(&want) {
                max_err = max_err.max(rel_err(*g, *w));
            }
        }
        report.push(OpCheck { op: case.name.to_string(), points, max_rel_err: max_err });
    }
    Ok(report)
}
