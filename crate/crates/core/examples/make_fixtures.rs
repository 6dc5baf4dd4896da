//! Regenerates the checked-in test assets.
//!
//! ```text
//! cargo run -p sftc --example make_fixtures
//! ```

#[path = "../tests/common/fixtures.rs"]
mod fixtures;

use std::fs;

fn main() -> sftc::Result<()> {
    let dir = fixtures::assets_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("model.nnwf"), fixtures::model_bytes())?;
    for i in 0..fixtures::IMAGE_COUNT {
        let name = fixtures::item_name(i);
        fixtures::face(i).save(dir.join(format!("{name}.png")))?;
        fs::write(dir.join(format!("{name}.fvec")), fixtures::feature(i).to_fvec_bytes())?;
        fs::write(dir.join(format!("{name}_alt.fvec")), fixtures::alternate_feature(i).to_fvec_bytes())?;
    }
    fs::write(dir.join("pairs.csv"), fixtures::pairs_csv())?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
