pub mod container;
pub mod cryptosuite;
pub mod identity;
pub mod lifecycle;
pub mod nodes;
pub mod sim;
pub mod wire;
