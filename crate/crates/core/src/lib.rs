pub mod ablation;
pub mod audio;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod scenes;
pub mod seeds;
pub mod training;
pub mod stft;

pub use audio::{read_wav, write_wav, Waveform, SAMPLE_RATE};
pub use error::{Error, Result};
pub use stft::{
    apply_mask, apply_mask_op, istft, istft_op, stft, stft_op, ComplexMask, ComplexSpectrogram,
    StftConfig,
};
pub use model::{mac_estimate, param_count, DeftAn, MacEstimate, ModelConfig, Preset, SubBlock, TFfwKind};
pub use loss::{metric_report, pcm_loss, pcm_loss_graph, si_sdr, LossReport, LossVars, MetricReport};
pub use scenes::{build_dataset, spatialize, RoomSpec, SceneExample, SceneRanges};
