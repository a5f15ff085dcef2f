//! Fully convolutional segmentation network: residual trunk of stacked
//! convolutions, 1×1 score heads on later stages, bilinear upsampling and a
//! summed, softmax-normalized posterior. Includes training, a finite
//! difference gradient check and a binary weight format.

mod checkpoint;
mod dataset;
mod gradcheck;
mod network;
mod ops;
mod spec;
mod tensor;
mod train;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes};
pub use dataset::{image_tensor, labels_dir, load_dataset, png_files, NamedSample};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, GradSample};
pub use network::{ForwardCache, Gradients, Network};
pub use ops::{
    conv2d, conv2d_backward, maxpool2, relu_in_place, softmax_cross_entropy, upsample_bilinear,
    upsample_bilinear_backward, ConvGrad, ConvLayer,
};
pub use spec::{NetworkSpec, StageSpec, StemSpec};
pub use tensor::{Scalar, Tensor};
pub use train::{
    pixel_accuracy, train, train_network, Adam, Phase, TrainOptions, TrainOutcome, TrainSample, TrainSchedule,
};
