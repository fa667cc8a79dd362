pub mod aggregate;
pub mod flow;
pub mod frame;
pub mod geom;
pub mod motion;
pub mod pipeline;
pub mod posture;
pub mod presence;
pub mod privacy;
pub mod sim;
pub mod stats;
