//! Configs compiled into the binary, addressed as `bundled:NAME`.

const CONFIGS: &[(&str, &str)] = &[
    ("compare_extinction", include_str!("../configs/compare_extinction.toml")),
    ("compare_extinction_129", include_str!("../configs/compare_extinction_129.toml")),
    ("compare_fig4_square", include_str!("../configs/compare_fig4_square.toml")),
    ("compare_fig4_square_129", include_str!("../configs/compare_fig4_square_129.toml")),
    ("compare_paraboloid_65", include_str!("../configs/compare_paraboloid_65.toml")),
    ("decay", include_str!("../configs/decay.toml")),
    ("fig4_blurred", include_str!("../configs/fig4_blurred.toml")),
    ("fig4_square", include_str!("../configs/fig4_square.toml")),
    ("fig4_square_129", include_str!("../configs/fig4_square_129.toml")),
    ("fig5_linear", include_str!("../configs/fig5_linear.toml")),
    ("fig5_restore", include_str!("../configs/fig5_restore.toml")),
    ("oracle_box_facet", include_str!("../configs/oracle_box_facet.toml")),
    ("oracle_front", include_str!("../configs/oracle_front.toml")),
    ("oracle_paraboloid", include_str!("../configs/oracle_paraboloid.toml")),
    ("paraboloid_65", include_str!("../configs/paraboloid_65.toml")),
    ("s1_diffusive", include_str!("../configs/s1_diffusive.toml")),
    ("s1_tv", include_str!("../configs/s1_tv.toml")),
    ("s2_diffusive", include_str!("../configs/s2_diffusive.toml")),
    ("s2_diffusive_65", include_str!("../configs/s2_diffusive_65.toml")),
    ("s2_tv", include_str!("../configs/s2_tv.toml")),
    ("s2_tv_65", include_str!("../configs/s2_tv_65.toml")),
    ("s3_diffusive", include_str!("../configs/s3_diffusive.toml")),
    ("s3_tv", include_str!("../configs/s3_tv.toml")),
    ("s4_diffusive", include_str!("../configs/s4_diffusive.toml")),
    ("s4_tv", include_str!("../configs/s4_tv.toml")),
    ("suite_ci", include_str!("../configs/suite_ci.toml")),
    ("suite_full", include_str!("../configs/suite_full.toml")),
];

pub fn get(name: &str) -> Option<&'static str> {
    CONFIGS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> Vec<&'static str> {
    CONFIGS.iter().map(|(n, _)| *n).collect()
}

/// Bundled experiment (`run`) configs.
pub fn experiment_names() -> Vec<&'static str> {
    CONFIGS
        .iter()
        .filter(|(_, text)| text.contains("[experiment]"))
        .map(|(n, _)| *n)
        .collect()
}
