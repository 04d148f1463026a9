//! Location and content predictors, their losses, training and checks.

pub mod baseline;
pub mod content;
pub mod gradcheck;
pub mod location;
pub mod losses;
pub(crate) mod nn;
pub mod oracle;
pub mod train;

pub use baseline::{DurationRegressor, RegressionConfig};
pub use content::{
    ContentBatch, ContentExample, ContentModel, ContentNet, ContentNetConfig, PriorContent,
};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use location::{
    LocationExample, LocationModel, LocationNet, LocationNetConfig, UniformLocation,
};
pub use losses::{content_loss, location_loss, softmax};
pub use nn::Adam;
pub use oracle::{OracleContent, OracleLocation, RestorationPlan};
pub use train::{train, training_pair, EpochLoss, TrainConfig, TrainReport, TrainedModels};

use crate::error::Result;

/// A model with a flat parameter vector and an analytic batch gradient.
pub trait Trainable {
    type Batch: ?Sized;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Mean loss over the batch and its gradient with respect to `params()`.
    fn loss_and_grad(&self, batch: &Self::Batch) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, batch: &Self::Batch) -> Result<f64> {
        Ok(self.loss_and_grad(batch)?.0)
    }
}
