pub use bsosc_core;
