pub mod fit;
pub mod profile;
pub mod simulate;
pub mod sweep;
pub mod verify;
