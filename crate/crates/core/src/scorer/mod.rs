//! Triple scorer: feature assembly, MLP, training, top-K selection and the
//! GraphSAGE ablation encoder.

mod features;
mod graphsage;
mod nn;
mod params_io;
mod select;
mod train;

pub use features::{
    assemble_features, entity_text_vectors, structural_encodings, EntityVectors, FeatureSpec, FeatureVariant,
};
pub use graphsage::{graphsage_encode, sage_backward, sage_forward, SageEncoder, SageGraph, SageTrace};
pub use nn::{sigmoid, softplus, Activation, Adam, ForwardCache, Network};
pub use params_io::{
    layers_from_bytes, layers_to_bytes, load_layers, load_params, params_from_bytes, params_to_bytes, save_params,
    scorer_fingerprint, RawLayer,
};
pub use select::{score_and_select, score_rows, select_top_k, RetrievalResult, DEFAULT_TOP_K};
pub use train::{
    bce_term, loss, loss_and_grad, mlp_forward, sage_loss_and_grad, train, train_graphsage, LabeledSample,
    SageSample, TrainConfig, TrainReport,
};
