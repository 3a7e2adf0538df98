pub mod composite;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod floquet;
pub mod gate;
pub mod linalg;
pub mod optim;
pub mod par;
pub mod pulse;
pub mod spectra;
