//! Saves a generated instance and loads it back; the stored hash is verified on load.

use landing::bench::{generate_pca_instance, load_instance, save_instance, Spectrum};

fn main() -> landing::Result<()> {
    let inst = generate_pca_instance(50, 4, 80, 9, Some(&Spectrum::Geometric { leading: 2.0, ratio: 0.8 }))?;
    let path = std::env::temp_dir().join("landing-instance.bin");
    save_instance(&path, &inst)?;
    let back = load_instance(&path)?;
    println!("saved {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    println!("hash {}", back.meta.hash);
    println!("identical: {}", back.objective.c() == inst.objective.c() && back.meta == inst.meta);

    // Flip one byte of the payload: loading must fail.
    let mut bytes = std::fs::read(&path)?;
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes)?;
    match load_instance(&path) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted file rejected: {e}"),
    }
    Ok(())
}
