//! Central finite-difference verification of analytic gradients.

use serde::{Deserialize, Serialize};

use crate::corpus::DialogInstance;
use crate::error::Result;
use crate::model::Dmrm;
use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

/// Below this gradient norm a group is compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub name: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, or the absolute
    /// difference norm when both norms are below [`ABS_FLOOR`].
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub numeric_norm: f64,
}

/// Compares `analytic` against central differences of `loss` for every
/// parameter array in `store`.
pub fn compare_gradients(
    store: &mut ParamStore,
    analytic: &Gradients,
    epsilon: f64,
    loss: impl Fn(&ParamStore) -> Result<f64>,
) -> Result<Vec<GroupError>> {
    let mut report = Vec::new();
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).len();
        let (rows, cols) = store.get(id).shape();
        let mut numeric = Tensor::zeros(rows, cols);
        for k in 0..n {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + epsilon;
            let plus = loss(store)?;
            store.get_mut(id).data_mut()[k] = orig - epsilon;
            let minus = loss(store)?;
            store.get_mut(id).data_mut()[k] = orig;
            numeric.data_mut()[k] = (plus - minus) / (2.0 * epsilon);
        }
        let zeros = Tensor::zeros(rows, cols);
        let a = analytic.get(id).unwrap_or(&zeros);
        let diff: f64 = a
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let max_abs_error = a
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let scale = a.sum_sq().sqrt().max(numeric.sum_sq().sqrt());
        let rel_error = if scale < ABS_FLOOR { diff } else { diff / scale };
        report.push(GroupError {
            name: store.name(id).to_owned(),
            rel_error,
            max_abs_error,
            numeric_norm: numeric.sum_sq().sqrt(),
        });
    }
    Ok(report)
}

/// Gradient check of the dialog training loss for every parameter group.
pub fn gradient_check(
    model: &mut Dmrm,
    dialog: &DialogInstance,
    features: &Tensor,
    epsilon: f64,
) -> Result<Vec<GroupError>> {
    let (_, analytic, _, _) = model.dialog_gradients(dialog, features)?;
    let mut store = std::mem::take(&mut model.store);
    let shell = model.clone();
    let result = compare_gradients(&mut store, &analytic, epsilon, |s| {
        let mut g = crate::graph::Graph::new(s);
        let dl = shell.dialog_loss(&mut g, dialog, features)?;
        Ok(g.scalar(dl.loss))
    });
    model.store = store;
    result
}
