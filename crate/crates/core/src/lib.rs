//! Variational autoencoders with a Poincaré-ball latent space.

pub mod ad;
pub mod ball;
pub mod data;
pub mod diffgeo;
pub mod hypdist;
pub mod nets;
pub mod par;
pub mod quad;
pub mod radsample;
pub mod special;
pub mod vae;
