//! Prints both feature catalogs with per-category leaf counts.
//!
//! cargo run --example catalog_table

use decenergy::catalog::{CatalogVariant, Category, FeatureCatalog};

fn main() {
    for variant in [CatalogVariant::Fa, CatalogVariant::Fu] {
        let catalog = FeatureCatalog::get(variant);
        let counts: Vec<String> = Category::ALL
            .iter()
            .map(|&c| format!("{c:?}={}", catalog.category_count(c)))
            .collect();
        println!(
            "{variant}: {} leaves ({})",
            catalog.len(),
            counts.join(", ")
        );
    }
    println!();
    print!("{}", FeatureCatalog::get(CatalogVariant::Fu).to_table());
}
