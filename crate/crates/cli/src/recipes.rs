//! Built-in recipe configurations, one per figure panel.

pub const RECIPES: [(&str, &str); 7] = [
    ("fig2a", include_str!("../recipes/fig2a.ini")),
    ("fig2b", include_str!("../recipes/fig2b.ini")),
    ("fig2c", include_str!("../recipes/fig2c.ini")),
    ("fig3a", include_str!("../recipes/fig3a.ini")),
    ("fig3b", include_str!("../recipes/fig3b.ini")),
    ("fig3c", include_str!("../recipes/fig3c.ini")),
    ("fig3d", include_str!("../recipes/fig3d.ini")),
];

pub fn recipe(name: &str) -> Option<&'static str> {
    RECIPES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn names() -> Vec<&'static str> {
    RECIPES.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn every_recipe_parses_and_names_a_mode() {
        for (name, text) in RECIPES {
            let cfg = RunConfig::parse(text, std::path::Path::new(".")).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(cfg.analysis.mode.is_some(), "{name}");
        }
    }
}
