//! Central finite differences against reverse-mode gradients for the
//! end-to-end classifier and discriminator losses.

use hyperset::autodiff::{ParamStore, Tape, Var};
use hyperset::classifier::{ClassifierConfig, ClassifierModel};
use hyperset::encoder::Structure;
use hyperset::expander::{ExpansionModel, GanConfig};

const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

/// Largest relative error over every parameter entry, with relative error
/// `|a − n| / max(|a|, |n|, 1e-3)` so entries with vanishing gradient are
/// compared absolutely.
fn check<F>(store: &mut ParamStore, loss: F) -> f64
where
    F: Fn(&ParamStore) -> (f64, Option<hyperset::autodiff::ParamGrads>),
{
    let (_, grads) = loss(store);
    let grads = grads.unwrap();
    let ids: Vec<_> = store.ids().collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        let n = store.get(id).data().len();
        for i in 0..n {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + STEP;
            let (lp, _) = loss(store);
            store.get_mut(id).data_mut()[i] = orig - STEP;
            let (lm, _) = loss(store);
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (lp - lm) / (2.0 * STEP);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    worst
}

fn run<'a>(
    store: &'a ParamStore,
    build: impl FnOnce(&mut Tape<'a>) -> Var,
    want_grads: bool,
) -> (f64, Option<hyperset::autodiff::ParamGrads>) {
    let mut t = Tape::new(store);
    let l = build(&mut t);
    let v = t.value(l).item();
    (v, want_grads.then(|| t.backward(l).unwrap()))
}

/// Worst relative error of the classifier loss gradient on a toy instance.
pub fn classifier_worst() -> f64 {
    let h = super::planted(8, 2, 5, 3, (2, 3));
    let s = Structure::new(&h);
    let mut model = ClassifierModel::from_config(&ClassifierConfig {
        hidden: 3,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let queries = vec![vec![0, 1], vec![2, 3, 4], vec![0, 7], vec![5, 9, 3]];
    let labels = vec![1.0, 1.0, 0.0, 0.0];
    let mut store = std::mem::take(&mut model.store);

    check(&mut store, |st| {
        run(
            st,
            |t| model.loss_tape(t, &s, &queries, &labels).unwrap(),
            true,
        )
    })
}

/// Worst relative error of the discriminator loss gradient on a toy instance.
pub fn discriminator_worst() -> f64 {
    let h = super::planted(9, 2, 5, 3, (2, 3));
    let s = Structure::new(&h);
    let mut model = ExpansionModel::from_config(&GanConfig {
        hidden: 3,
        seed: 22,
        ..Default::default()
    })
    .unwrap();
    let pairs = vec![
        (vec![0, 1], vec![2]),
        (vec![5], vec![6, 7]),
        (vec![3, 4], vec![8, 9]),
    ];
    let labels = vec![1.0, 0.0, 1.0];
    let mut store = std::mem::take(&mut model.store);

    check(&mut store, |st| {
        run(
            st,
            |t| model.disc_loss_tape(t, &s, &pairs, &labels).unwrap(),
            true,
        )
    })
}
