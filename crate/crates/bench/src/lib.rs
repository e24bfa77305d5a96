//! Fixtures shared by the benchmarks.

use mixreg::simgen::{
    AdditiveDesign, AdditiveResponse, LinearDesign, SimDataset, SimDesign, WeightSetting,
};
use mixreg::{Family, MixtureModel};

pub fn linear_data(n: usize, m: usize, p_m: usize) -> SimDataset {
    SimDesign::Linear(LinearDesign { n, m, p_m, family: Family::Normal, seed: 1 })
        .generate()
        .expect("grid design")
}

pub fn additive_data(noise_vars: usize) -> SimDataset {
    SimDesign::Additive(AdditiveDesign {
        n: 2500,
        response: AdditiveResponse::Gaussian,
        scale: 2.0,
        weights: WeightSetting::Uniform,
        noise_vars,
        seed: 1,
    })
    .generate()
    .expect("grid design")
}

/// Model of the generating class bound to the simulated rows.
pub fn model_for(data: &SimDataset) -> MixtureModel {
    MixtureModel::new(data.truth.spec.clone(), &data.covariates, data.y.clone()).expect("valid spec")
}
