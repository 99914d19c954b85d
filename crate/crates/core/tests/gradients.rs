use gcbm::net::{
    gradient_check, gradients, Example, GcbmModel, LossWeights, ModelShape, PreparedBatch,
};
use gcbm::synthetic::random_graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn shape() -> ModelShape {
    ModelShape {
        num_node_labels: 3,
        hidden: 6,
        level_widths: vec![4, 3, 5],
        num_classes: 3,
    }
}

fn random_model(seed: u64) -> GcbmModel<f64> {
    let mut model = GcbmModel::<f64>::init(shape(), 0.2, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for (_, t) in model.params.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-0.6..0.6);
        }
    }
    model
}

/// Per-class relative error `||a - n|| / (||a|| + ||n||)`; returns the
/// classes that were compared.
fn check(
    model: &GcbmModel<f64>,
    batch: &PreparedBatch<f64>,
    weights: LossWeights,
) -> Vec<&'static str> {
    let classes = gradient_check(model, batch, weights, H).unwrap();
    assert_eq!(classes.len(), 12);
    let mut verified = Vec::new();
    for c in classes {
        if c.name == "b1" {
            // normalization with batch statistics cancels the first bias
            assert!(
                c.analytic_norm < 1e-9 && c.numeric_norm < 1e-6,
                "b1 gradient should vanish"
            );
            continue;
        }
        if c.analytic_norm < 1e-9 && c.numeric_norm < 1e-9 {
            // degenerate batch, e.g. one node per graph
            continue;
        }
        let rel = c.relative_error();
        assert!(
            rel < 1e-4,
            "{}: relative error {rel:e} (analytic {:e}, numeric {:e})",
            c.name,
            c.analytic_norm,
            c.numeric_norm
        );
        verified.push(c.name);
    }
    verified
}

fn random_batch(
    rng: &mut ChaCha8Rng,
    targets: &mut Vec<Vec<f64>>,
) -> (Vec<gcbm::Graph>, Vec<usize>) {
    let width = shape().bottleneck_width();
    let graphs: Vec<gcbm::Graph> = (0..3)
        .map(|id| {
            let n = rng.gen_range(3..8);
            // label 3 exercises the unknown slot
            random_graph(rng, id, n, 2, 4)
        })
        .collect();
    targets.clear();
    for _ in 0..graphs.len() {
        targets.push((0..width).map(|_| rng.gen_range(0.0..1.0)).collect());
    }
    let labels = (0..graphs.len()).map(|_| rng.gen_range(0..3)).collect();
    (graphs, labels)
}

#[test]
fn analytic_gradients_match_central_differences() {
    let weights = LossWeights {
        lambda_c: 0.8,
        lambda_r: 0.05,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut targets = Vec::new();
    for draw in 0..2 {
        let model = random_model(100 + draw);
        let (graphs, labels) = random_batch(&mut rng, &mut targets);
        // each graph alone, then all three together
        for i in 0..graphs.len() {
            let ex = [Example {
                graph: &graphs[i],
                label: labels[i],
                concepts: &targets[i],
            }];
            check(
                &model,
                &PreparedBatch::new(&ex, &model.shape).unwrap(),
                weights,
            );
        }
        let ex: Vec<Example<f64>> = (0..graphs.len())
            .map(|i| Example {
                graph: &graphs[i],
                label: labels[i],
                concepts: &targets[i],
            })
            .collect();
        let verified = check(
            &model,
            &PreparedBatch::new(&ex, &model.shape).unwrap(),
            weights,
        );
        assert_eq!(
            verified.len(),
            11,
            "batched check covers every tensor but b1"
        );
    }
}

#[test]
fn self_loop_gradients() {
    let model = random_model(3);
    let g = gcbm::synthetic::labeled_triangle();
    let target = vec![0.3; model.shape.bottleneck_width()];
    let ex = [Example {
        graph: &g,
        label: 2,
        concepts: &target,
    }];
    let weights = LossWeights {
        lambda_c: 1.0,
        lambda_r: 0.0,
    };
    let verified = check(
        &model,
        &PreparedBatch::new(&ex, &model.shape).unwrap(),
        weights,
    );
    assert_eq!(verified.len(), 11);
}

#[test]
fn zero_lambda_c_removes_concept_gradient() {
    let model = random_model(5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_graph(&mut rng, 0, 5, 1, 3);
    let t1 = vec![0.0; model.shape.bottleneck_width()];
    let t2 = vec![1.0; model.shape.bottleneck_width()];
    let weights = LossWeights {
        lambda_c: 0.0,
        lambda_r: 0.0,
    };
    let grad = |t: &Vec<f64>| {
        let ex = [Example {
            graph: &g,
            label: 1,
            concepts: t,
        }];
        gradients(
            &model,
            &PreparedBatch::new(&ex, &model.shape).unwrap(),
            weights,
        )
        .unwrap()
        .1
    };
    assert_eq!(grad(&t1), grad(&t2));
}
