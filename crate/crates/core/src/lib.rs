pub mod agent;
pub mod campaign;
pub mod controlplane;
pub mod dataplane;
pub mod faults;
pub mod manager;
pub mod netmodel;
pub mod oracle;
pub mod simkernel;
