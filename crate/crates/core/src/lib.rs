pub mod arap;
pub mod bend;
pub mod field;
pub mod geom;
pub mod pipeline;
pub mod render;
pub mod tetproxy;
