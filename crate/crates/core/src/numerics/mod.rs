//! Dense kernels shared by the codec: matrices, 1-D convolution, Transformer
//! layers with rotary positions, STFT and mel filterbanks.

pub mod conv;
pub mod matrix;
pub mod mel;
pub mod stft;
pub mod transformer;

pub use conv::{conv1d, conv_output_len, ConvKernel, ConvParams};
pub use matrix::{dot, Matrix, MatrixView};
pub use mel::{log_mel_spectrogram, mel_filterbank, mel_spectrogram};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, Window};
pub use transformer::{
    transformer_block, transformer_block_traced, transformer_stack, OwnedTransformerLayer,
    TransformerLayerWeights,
};
