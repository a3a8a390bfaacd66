//! Convolutional features with a hand-written reverse pass, hypercolumn
//! assembly and the rotated style dictionary.

mod cache;
mod dictionary;
mod extractor;
mod hypercolumn;
mod rotate;
mod tensor;

pub use cache::{decode_dictionary, dictionary_key, encode_dictionary, DictionaryCache};
pub use dictionary::{build_style_dictionary, DictionaryParams, FeatureSet, RotatedStyleDictionary};
pub use extractor::{
    build_extractor, read_weight_file, write_weight_file, ConvWeights, Extractor, ExtractorSpec, FeatureMaps,
    ForwardPass, LayerSpec, WeightSource, IMAGENET_MEAN,
};
pub use hypercolumn::{downsample_features, hypercolumn_dims, HypercolumnMap, HypercolumnResampler};
pub use rotate::{rotate_image, RotateFilter};
pub use tensor::Tensor;
