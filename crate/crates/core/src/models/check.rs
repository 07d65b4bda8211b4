use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{make_ols, make_probit, simulate_dgp, wrap_penalty, DgpKind, Nls, QuadraticModel};
use crate::data::Dataset;
use crate::error::Result;
use crate::objective::{check_gradient, Model};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, Serialize)]
pub struct ModelCheck {
    pub model: String,
    pub points: usize,
    /// Largest relative discrepancy over all points and coordinates.
    pub max_discrepancy: f64,
}

/// Every built-in model with an analytic gradient, paired with a dataset it
/// can be evaluated on.
pub fn builtin_models(seed: u64) -> Result<Vec<(Box<dyn Model>, Dataset)>> {
    let theta = vec![0.5, 1.0, -1.0];
    let linear = simulate_dgp(&DgpKind::LinearGaussian { n: 200, theta: theta.clone() }, seed)?.data;
    let binary = simulate_dgp(&DgpKind::Probit { n: 200, theta }, seed)?.data;
    let fe = simulate_dgp(
        &DgpKind::FixedEffectsProbit { n_units: 8, periods: 40, beta: vec![1.0], fe_sd: 0.5 },
        seed,
    )?
    .data;
    let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, -0.5]);
    let quad = QuadraticModel::new(h, DVector::from_vec(vec![1.0, 0.0, -1.0]))?;
    let quad_data = quad.noise_data(50, 1.0, seed);
    let probit: Arc<dyn Model> = Arc::new(make_probit(3));
    Ok(vec![
        (Box::new(make_ols(3)), linear.clone()),
        (Box::new(make_probit(3)), binary.clone()),
        (Box::new(make_probit(9).with_fixed_effects((1..9).collect())), fe),
        (Box::new(Nls::exponential(3)), linear),
        (Box::new(quad), quad_data),
        (Box::new(wrap_penalty(probit, 20.0, DVector::from_vec(vec![0.3, -0.2, 0.1]))), binary),
    ])
}

/// Check each built-in gradient at `points` random parameter values.
pub fn builtin_gradient_checks(points: usize, seed: u64) -> Result<Vec<ModelCheck>> {
    builtin_models(seed)?
        .into_iter()
        .map(|(model, data)| {
            let mut rng = substream(seed, 1, Purpose::Dgp);
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                let theta = DVector::from_fn(model.dim(), |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.5 * z
                });
                worst = worst.max(check_gradient(model.as_ref(), &data, &theta)?.max_discrepancy);
            }
            Ok(ModelCheck { model: model.name().to_string(), points, max_discrepancy: worst })
        })
        .collect()
}
