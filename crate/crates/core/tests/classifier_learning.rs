mod common;

use hyperset::classifier::{
    evaluate_pairs, f1, fixed_negatives, train_classifier, ClassificationTask, ClassifierConfig,
    ClassifierModel, NegativeSampler,
};
use hyperset::encoder::Structure;
use hyperset::hypergraph::Hypergraph;
use hyperset::par::Exec;
use hyperset::rng::stream;

fn split(h: &Hypergraph) -> (ClassificationTask, Vec<Vec<usize>>) {
    let edges = h.edges().to_vec();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (i, e) in edges.iter().enumerate() {
        match i % 6 {
            0 => test.push(e.clone()),
            1 => val.push(e.clone()),
            _ => train.push(e.clone()),
        }
    }
    let task = ClassificationTask {
        n: h.num_vertices(),
        train_edges: train,
        val_edges: val,
        forbidden: edges,
    };
    (task, test)
}

fn config() -> ClassifierConfig {
    ClassifierConfig {
        hidden: 16,
        lr: 0.01,
        max_epochs: 60,
        seed: 5,
        ..Default::default()
    }
}

// Query representations are sums of per-vertex summaries, so symmetric
// planted communities are not separable; degree skew is.
#[test]
fn hub_structure_is_learned() {
    let h = common::skewed(1, 80, 150, (2, 4));
    let (task, test) = split(&h);
    let trained = train_classifier(&task, &config(), Exec::Parallel).unwrap();
    let first = trained.history.first().unwrap().loss;
    let last = trained.history.last().unwrap().loss;
    assert!(last < first, "loss {first} -> {last}");

    let mut observed = task.train_edges.clone();
    observed.extend(task.val_edges.iter().cloned());
    let structure = Structure::new(&Hypergraph::new(task.n, observed).unwrap());
    let state = trained.model.encode(&structure).unwrap();
    let sampler = NegativeSampler::new(task.n, task.forbidden.iter().cloned());
    let negs = fixed_negatives(&sampler, &test, 5, &mut stream(9, 0));
    let pairs = evaluate_pairs(&trained.model, &state, &test, &negs, Exec::Sequential).unwrap();
    let mean = |label: bool| {
        let v: Vec<f64> = pairs.iter().filter(|p| p.1 == label).map(|p| p.0).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(true) > mean(false));
    let score = f1(&pairs, 0.5).unwrap();
    assert!(score > 2.0 / 7.0, "test F1 {score}");
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let h = common::planted(2, 3, 8, 8, (2, 3));
    let (task, _) = split(&h);
    let cfg = ClassifierConfig {
        lr: 0.0,
        max_epochs: 3,
        ..config()
    };
    let trained = train_classifier(&task, &cfg, Exec::Sequential).unwrap();
    let fresh = ClassifierModel::from_config(&cfg).unwrap();
    for id in fresh.store.ids() {
        assert_eq!(fresh.store.get(id), trained.model.store.get(id));
    }
}

#[test]
fn training_is_seed_deterministic() {
    let h = common::planted(3, 3, 8, 8, (2, 3));
    let (task, _) = split(&h);
    let cfg = ClassifierConfig {
        max_epochs: 5,
        ..config()
    };
    let a = train_classifier(&task, &cfg, Exec::Parallel).unwrap();
    let b = train_classifier(&task, &cfg, Exec::Sequential).unwrap();
    assert_eq!(a.history, b.history);
    for id in a.model.store.ids() {
        assert_eq!(a.model.store.get(id), b.model.store.get(id));
    }
}
