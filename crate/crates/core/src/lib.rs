pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod elliptic;
pub mod primal;
pub mod alm;
pub mod oracle;
pub mod instance;
pub mod output;
pub mod cli;
