//! Shared fixtures for the criterion benches in `benches/`.

use mewm_core::actions::ActionBase;
use mewm_core::cohort::{default_efficacy_table, planted_cox, synthesize_scan, CohortConfig};
use mewm_core::{ActionCombo, ComboNames, Mask3, Vocabulary, Volume3, WorldModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub pre: Volume3,
    pub mask: Mask3,
    pub vocabulary: Vocabulary,
    pub base: ActionBase,
    pub world: WorldModel,
}

/// One synthetic patient on a `dims` grid with the default vocabulary and planted survival model.
pub fn fixture(seed: u64, dims: [usize; 3]) -> Fixture {
    let cfg = CohortConfig {
        dims,
        ..Default::default()
    };
    let (pre, mask) = synthesize_scan(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).expect("scan");
    let vocabulary = Vocabulary::default();
    let base = ActionBase::from_vocabulary(&vocabulary);
    let mut world = WorldModel::new(default_efficacy_table(), planted_cox());
    world.segmenter = cfg.segmenter;
    Fixture {
        pre,
        mask,
        vocabulary,
        base,
        world,
    }
}

impl Fixture {
    pub fn combo(&self, drugs: &[&str], embolics: &[&str]) -> ActionCombo {
        let names = ComboNames {
            drugs: drugs.iter().map(|s| s.to_string()).collect(),
            embolics: embolics.iter().map(|s| s.to_string()).collect(),
        };
        self.vocabulary.resolve(&names).expect("known units")
    }
}
