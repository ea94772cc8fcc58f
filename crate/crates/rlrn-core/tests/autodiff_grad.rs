//! Finite-difference gradient checks for every tape op. The oracle is a
//! 64-bit reference evaluator in `common`; central differences use step
//! 1e-3 and the comparison tolerance is 1e-4 (relative, floored at 1).

mod common;

use common::*;
use proptest::prelude::*;
use rlrn_core::autodiff::{NodeId, Tape, Tensor};

const STEP: f64 = 1e-3;
const TOL: f64 = 1e-4;

/// Build the tape once with f32 copies of `inputs` as grad-tracked leaves,
/// then compare every leaf gradient with central differences of `reference`.
fn check_gradients(
    inputs: &[(Vec<usize>, Vec<f64>)],
    build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    reference: &dyn Fn(&[Vec<f64>]) -> f64,
) {
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = inputs
        .iter()
        .map(|(shape, data)| {
            tape.leaf(
                Tensor::new(shape.clone(), to_f32(data))
                    .unwrap()
                    .with_requires_grad(true),
            )
        })
        .collect();
    let loss = build(&mut tape, &leaves);

    // Forward agreement between engine and reference guards against a
    // gradient that is "correct" for the wrong function.
    let flat: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    let ref_loss = reference(&flat);
    assert!(
        close_rel(f64::from(tape.value(loss).item()), ref_loss, 1e-4),
        "forward mismatch: engine {} vs reference {ref_loss}",
        tape.value(loss).item()
    );

    let grads = tape.backward(loss).unwrap();
    for (which, leaf) in leaves.iter().enumerate() {
        let got = grads.get(*leaf).expect("leaf should receive a gradient");
        for coord in 0..flat[which].len() {
            let fd = central_diff(reference, &flat, which, coord, STEP);
            assert!(
                close_rel(f64::from(got[coord]), fd, TOL),
                "input {which} coord {coord}: engine {} vs finite-difference {fd}",
                got[coord]
            );
        }
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let (m, k, n) = (3, 4, 2);
    check_gradients(
        &[
            (vec![m, k], wave(m * k, 0.71, 0.1)),
            (vec![k, n], wave(k * n, 0.41, 1.3)),
        ],
        |tape, leaves| {
            let c = tape.matmul(leaves[0], leaves[1]).unwrap();
            tape.sum_all(c)
        },
        &|x| matmul64(&x[0], &x[1], m, k, n).iter().sum(),
    );
}

#[test]
fn matmul_nt_gradient_matches_finite_differences() {
    let (m, k, n) = (3, 4, 2);
    check_gradients(
        &[
            (vec![m, k], wave(m * k, 0.63, 0.4)),
            (vec![n, k], wave(n * k, 0.37, 2.1)),
        ],
        |tape, leaves| {
            let c = tape.matmul_nt(leaves[0], leaves[1]).unwrap();
            let sq = tape.mul(c, c).unwrap();
            tape.sum_all(sq)
        },
        &|x| {
            // b transposed: b[n,k] used as [k,n]
            let mut bt = vec![0.0; k * n];
            for j in 0..n {
                for p in 0..k {
                    bt[p * n + j] = x[1][j * k + p];
                }
            }
            matmul64(&x[0], &bt, m, k, n).iter().map(|v| v * v).sum()
        },
    );
}

#[test]
fn elementwise_chain_gradient() {
    let n = 6;
    check_gradients(
        &[(vec![n], wave(n, 0.9, 0.2)), (vec![n], wave(n, 1.7, 0.8))],
        |tape, leaves| {
            let s = tape.add(leaves[0], leaves[1]).unwrap();
            let t = tape.tanh(s);
            let u = tape.mul(t, leaves[0]).unwrap();
            let v = tape.sigmoid(u);
            let w = tape.sub(v, leaves[1]).unwrap();
            let x = tape.affine(w, 1.7, 0.3);
            tape.mean_all(x)
        },
        &|x| {
            let vals: Vec<f64> = (0..n)
                .map(|i| {
                    let s = (x[0][i] + x[1][i]).tanh() * x[0][i];
                    1.7 * (sigmoid64(s) - x[1][i]) + 0.3
                })
                .collect();
            vals.iter().sum::<f64>() / n as f64
        },
    );
}

#[test]
fn relu_gradient_away_from_kink() {
    // Inputs bounded away from 0 so the finite difference is exact.
    let data = vec![0.8, -0.6, 1.4, -1.2, 0.3];
    check_gradients(
        &[(vec![5], data)],
        |tape, leaves| {
            let r = tape.relu(leaves[0]);
            tape.sum_all(r)
        },
        &|x| x[0].iter().map(|&v| relu64(v)).sum(),
    );

    // And directly: slope 1 above zero, 0 below.
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![2.0, -2.0]).unwrap().with_requires_grad(true));
    let r = tape.relu(x);
    let loss = tape.sum_all(r);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[1.0, 0.0]);
}

#[test]
fn exp_ln_gradients() {
    let data = vec![0.5, 1.2, 2.0, 0.9];
    check_gradients(
        &[(vec![4], data)],
        |tape, leaves| {
            let e = tape.exp(leaves[0]);
            let l = tape.ln(e);
            let m = tape.mul(l, e).unwrap();
            tape.sum_all(m)
        },
        &|x| x[0].iter().map(|&v| v * v.exp()).sum(),
    );
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let n = 5;
    let weights = wave(n, 0.77, 0.5);
    let w32 = to_f32(&weights);
    check_gradients(
        &[(vec![n], wave(n, 1.1, 0.0))],
        |tape, leaves| {
            let y = tape.softmax(leaves[0], None).unwrap();
            let w = tape.constant(Tensor::new(vec![n], w32.clone()).unwrap());
            let p = tape.mul(y, w).unwrap();
            tape.sum_all(p)
        },
        &|x| {
            softmax64(&x[0])
                .iter()
                .zip(weights.iter())
                .map(|(y, w)| y * w)
                .sum()
        },
    );
}

#[test]
fn masked_softmax_gradient() {
    let n = 4;
    let mask = [true, false, true, true];
    let weights = wave(n, 0.3, 0.9);
    let w32 = to_f32(&weights);
    check_gradients(
        &[(vec![n], wave(n, 0.57, 0.23))],
        |tape, leaves| {
            let y = tape.softmax(leaves[0], Some(&mask)).unwrap();
            let w = tape.constant(Tensor::new(vec![n], w32.clone()).unwrap());
            let p = tape.mul(y, w).unwrap();
            tape.sum_all(p)
        },
        &|x| {
            let kept: Vec<f64> = (0..n).filter(|&j| mask[j]).map(|j| x[0][j]).collect();
            let sm = softmax64(&kept);
            let mut full = vec![0.0; n];
            let mut it = sm.iter();
            for j in 0..n {
                if mask[j] {
                    full[j] = *it.next().unwrap();
                }
            }
            full.iter().zip(weights.iter()).map(|(y, w)| y * w).sum()
        },
    );
}

#[test]
fn concat_routes_gradients_to_the_right_input() {
    check_gradients(
        &[(vec![2], vec![0.3, -0.4]), (vec![3], vec![0.9, 0.1, -0.7])],
        |tape, leaves| {
            let c = tape.concat(&[leaves[0], leaves[1]], 0).unwrap();
            // weight each slot differently so routing errors are visible
            let w = tape.constant(Tensor::new(vec![5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
            let p = tape.mul(c, w).unwrap();
            tape.sum_all(p)
        },
        &|x| {
            let cat: Vec<f64> = x[0].iter().chain(x[1].iter()).copied().collect();
            cat.iter().zip([1.0, 2.0, 3.0, 4.0, 5.0]).map(|(v, w)| v * w).sum()
        },
    );
}

#[test]
fn row_extraction_gradient() {
    let (r, c) = (3, 4);
    check_gradients(
        &[(vec![r, c], wave(r * c, 0.5, 0.1))],
        |tape, leaves| {
            let row = tape.row(leaves[0], 1).unwrap();
            let sq = tape.mul(row, row).unwrap();
            tape.sum_all(sq)
        },
        &|x| x[0][c..2 * c].iter().map(|v| v * v).sum(),
    );
}

#[test]
fn three_layer_mlp_gradients_match_finite_differences() {
    // Random 3-layer MLP, all parameters checked against the 64-bit oracle.
    let dims = [4usize, 6, 5, 1];
    let mut inputs: Vec<(Vec<usize>, Vec<f64>)> = vec![(vec![1, dims[0]], wave(dims[0], 0.81, 0.4))];
    for l in 0..3 {
        inputs.push((vec![dims[l], dims[l + 1]], wave(dims[l] * dims[l + 1], 0.23 + l as f64 * 0.11, 1.0)));
        inputs.push((vec![1, dims[l + 1]], wave(dims[l + 1], 0.91 + l as f64 * 0.07, 2.0)));
    }
    check_gradients(
        &inputs,
        |tape, leaves| {
            let mut h = leaves[0];
            for l in 0..3 {
                let z = tape.matmul(h, leaves[1 + 2 * l]).unwrap();
                let z = tape.add(z, leaves[2 + 2 * l]).unwrap();
                h = if l < 2 { tape.tanh(z) } else { z };
            }
            let sq = tape.mul(h, h).unwrap();
            tape.sum_all(sq)
        },
        &|x| {
            let mut h = x[0].clone();
            for l in 0..3 {
                let z = matmul64(&h, &x[1 + 2 * l], 1, dims[l], dims[l + 1]);
                h = z
                    .iter()
                    .zip(x[2 + 2 * l].iter())
                    .map(|(a, b)| if l < 2 { (a + b).tanh() } else { a + b })
                    .collect();
            }
            h.iter().map(|v| v * v).sum()
        },
    );
}

#[test]
fn conv2d_gradients_on_toy_raster() {
    let (ic, h, w, oc, k, stride, pad) = (2usize, 8usize, 8usize, 3usize, 3usize, 2usize, 1usize);
    check_gradients(
        &[
            (vec![ic, h, w], wave(ic * h * w, 0.29, 0.7)),
            (vec![oc, ic, k, k], wave(oc * ic * k * k, 0.47, 0.2)),
            (vec![oc], wave(oc, 0.9, 0.1)),
        ],
        |tape, leaves| {
            let c = tape.conv2d(leaves[0], leaves[1], leaves[2], stride, pad).unwrap();
            let sq = tape.mul(c, c).unwrap();
            tape.sum_all(sq)
        },
        &|x| {
            conv2d64(&x[0], &x[1], &x[2], ic, h, w, oc, k, stride, pad)
                .iter()
                .map(|v| v * v)
                .sum()
        },
    );
}

#[test]
fn global_avg_pool_gradient() {
    let (c, h, w) = (3, 4, 4);
    check_gradients(
        &[(vec![c, h, w], wave(c * h * w, 0.61, 0.0))],
        |tape, leaves| {
            let p = tape.global_avg_pool(leaves[0]).unwrap();
            let sq = tape.mul(p, p).unwrap();
            tape.sum_all(sq)
        },
        &|x| {
            (0..c)
                .map(|ch| {
                    let mean =
                        x[0][ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64;
                    mean * mean
                })
                .sum()
        },
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Randomized op-chain gradient check: matmul -> tanh -> mul -> mean.
    #[test]
    fn randomized_dense_chain_passes_fd(seed in 0u64..1000, m in 1usize..4, k in 1usize..5, n in 1usize..4) {
        let a = wave(m * k, 0.13 + seed as f64 * 0.001, seed as f64 * 0.37);
        let b = wave(k * n, 0.19 + seed as f64 * 0.002, seed as f64 * 0.11);
        check_gradients(
            &[(vec![m, k], a), (vec![k, n], b)],
            |tape, leaves| {
                let c = tape.matmul(leaves[0], leaves[1]).unwrap();
                let t = tape.tanh(c);
                let sq = tape.mul(t, t).unwrap();
                tape.mean_all(sq)
            },
            &|x| {
                let c = matmul64(&x[0], &x[1], m, k, n);
                c.iter().map(|v| { let t = v.tanh(); t * t }).sum::<f64>() / (m * n) as f64
            },
        );
    }

    /// Softmax outputs sum to one over unmasked entries for any finite input.
    #[test]
    fn softmax_normalizes(values in proptest::collection::vec(-1e3f32..1e3, 1..12)) {
        let n = values.len();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![n], values).unwrap());
        let y = tape.softmax(x, None).unwrap();
        let data = tape.value(y).data();
        let sum: f32 = data.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        prop_assert!(data.iter().all(|&v| v >= 0.0));
    }

    /// Activations stay finite for |x| <= 1e3.
    #[test]
    fn activations_finite_on_bounded_inputs(values in proptest::collection::vec(-1e3f32..1e3, 1..16)) {
        let n = values.len();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![n], values).unwrap());
        let t = tape.tanh(x);
        let s = tape.sigmoid(x);
        let r = tape.relu(x);
        for id in [t, s, r] {
            prop_assert!(tape.value(id).data().iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn reshape_and_row_broadcast_add_gradients() {
    let (r, c) = (3usize, 4usize);
    check_gradients(
        &[
            (vec![r, c], wave(r * c, 0.43, 0.6)),
            (vec![1, c], wave(c, 0.27, 1.5)),
        ],
        |tape, leaves| {
            let biased = tape.add(leaves[0], leaves[1]).unwrap();
            let flat = tape.reshape(biased, vec![r * c]).unwrap();
            let sq = tape.mul(flat, flat).unwrap();
            tape.sum_all(sq)
        },
        &|x| {
            let mut total = 0.0;
            for row in 0..r {
                for col in 0..c {
                    let v = x[0][row * c + col] + x[1][col];
                    total += v * v;
                }
            }
            total
        },
    );
}
