//! Day-ahead peak forecasting for a metered micro-grid.
//!
//! A stacked LSTM (trained from scratch with BPTT and Adam) forecasts the
//! next 24 hourly demands from the preceding 48 encoded hours. The min-max
//! labeler turns any 24-hour forecast into top-k / bottom-k hour labels,
//! which drive a battery peak-shaving simulation and a closed-form
//! demand-charge savings model.

pub mod baselines;
pub mod battery;
pub mod cli;
pub mod features;
pub mod labeler;
mod linalg;
pub mod lstm;
pub mod metrics;
pub mod model_file;
pub mod report;
pub mod trace;
pub mod train;

pub use baselines::{fit_linreg, predict_linreg, seasonal_naive_predict, LinRegModel};
pub use battery::{closed_form_savings, dispatch_day, payback_years, BatterySpec, TariffSpec};
pub use features::{build_windows, fit_normalizer, FeatureVector, NormalizationParams, WindowSample};
pub use labeler::{label_day, DayLabeling, Label};
pub use lstm::{predict_day, ModelParams, DEFAULT_HIDDEN};
pub use metrics::{capture_accuracy, mape, CaptureMode};
pub use model_file::{Precision, StoredModel};
pub use trace::{generate_synthetic, CalendarSpec, DemandTrace, SyntheticConfig};
pub use train::{train, TrainConfig};
