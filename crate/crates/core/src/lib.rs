pub mod params;
pub mod special;
pub mod analytic;
pub mod oracle;
pub mod spectrum;
pub mod scenarios;
pub mod validation;
