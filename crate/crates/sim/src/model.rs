//! Model registry: everything the runner needs for one named model.

use physobs::cascade::CascadeBundle;
use physobs::drem::Reduction;
use physobs::example::{self, ExampleConfig, ExampleInverse, Truth};
use physobs::filters::FilterGains;
use physobs::plant::{Exosystem, PlantModel};

use crate::scenario::ConfigError;

pub const MODELS: [&str; 1] = [example::MODEL_NAME];

pub struct ModelKit {
    pub plant: PlantModel,
    pub exo: Exosystem,
    pub gains: FilterGains,
    pub reduction: Reduction,
    /// Regressor entries expected to coincide.
    pub equal_pairs: Vec<(usize, usize)>,
    pub bundle: CascadeBundle,
    pub inverse: ExampleInverse,
    pub truth: Truth,
}

pub fn build(model: &str, cfg: &ExampleConfig) -> Result<ModelKit, ConfigError> {
    if model != example::MODEL_NAME {
        return Err(ConfigError(vec![format!("model: unknown model {model:?}")]));
    }
    let (plant, exo) = example::example_model(cfg)?;
    let gains = FilterGains::new(&cfg.k, &cfg.f).map_err(|e| ConfigError(vec![e.to_string()]))?;
    let (reduction, equal_pairs) = example::example_reduction()?;
    let bundle = example::example_bundle(cfg)?;
    let inverse = ExampleInverse::new(cfg)?;
    let truth = example::truth(cfg)?;
    Ok(ModelKit {
        plant,
        exo,
        gains,
        reduction,
        equal_pairs,
        bundle,
        inverse,
        truth,
    })
}
