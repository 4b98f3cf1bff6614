pub mod cli;
pub mod harness;
pub mod interp;
pub mod ir;
pub mod minimc;
pub mod pass;
pub mod relate;
pub mod textio;
