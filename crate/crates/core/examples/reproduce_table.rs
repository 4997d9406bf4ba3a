//! Rebuilds a rejection-rate table at reduced scale and prints it next to
//! the full-scale reference values.
//!
//! cargo run --release --example reproduce_table -- binary-power 100

use ivtest::simulation::{reproduce_table, Scale, TABLES};

fn main() -> ivtest::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "binary-null".into());
    let mc: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    if !TABLES.contains(&id.as_str()) {
        eprintln!("known tables: {}", TABLES.join(", "));
        std::process::exit(2);
    }
    let table = reproduce_table(
        &id,
        Scale {
            mc_iters: mc,
            n_override: Some(300),
        },
        7,
    )?;
    print!("{}", table.to_text());
    Ok(())
}
