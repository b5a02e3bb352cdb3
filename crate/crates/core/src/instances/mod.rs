//! Instance construction: seeded random models, the microgrid storage model
//! and the JSON instance format.

pub mod io;
pub mod microgrid;
pub mod random;

pub use io::{
    read_instance, read_instance_str, write_instance, write_instance_string, INSTANCE_VERSION,
};
pub use microgrid::{build_microgrid, MicrogridSpec};
pub use random::{gen_random, RandomSpec, RewardModel};
