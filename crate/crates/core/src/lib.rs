//! Discrete variational autoencoder with a restricted Boltzmann machine
//! prior over 256 binary latents, for SMILES strings.

pub mod cli;
pub mod decoder;
pub mod encoder;
pub mod evaluation;
pub mod generate;
pub mod latent;
pub mod model;
pub mod nn;
pub mod rbm;
pub mod rng;
pub mod smiles;
pub mod train;
