pub mod golden;
pub mod ipc;
pub mod queues;
pub mod scheduler;
