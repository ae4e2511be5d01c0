#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use mammo_core::phantom::{add_gaussian_noise, breast_phantom, disk_mask};
use mammo_core::pnm::save;
use mammo_core::GrayImage;

pub const SIZE: usize = 128;
pub const LESION: (f64, f64, f64) = (70.0, 45.0, 12.0);

/// Breast phantom, optionally with a bright disk lesion, lightly noised.
pub fn phantom(lesion: bool, seed: u64) -> GrayImage {
    let (mut img, breast, _) = breast_phantom::<f64>(SIZE, SIZE, 30);
    if lesion {
        let (cy, cx, r) = LESION;
        let disk = disk_mask(SIZE, SIZE, cy, cx, r);
        img = GrayImage::from_fn(SIZE, SIZE, |row, col| {
            if disk.get(row, col) && breast.get(row, col) {
                0.85
            } else {
                img.get(row, col)
            }
        });
    }
    add_gaussian_noise(&img, 0.01, seed).clamp_unit()
}

/// Info line with the MIAS convention of `y` measured from the bottom.
pub fn lesion_line(id: &str) -> String {
    let (cy, cx, r) = LESION;
    format!(
        "{} F CIRC M {} {} {}\n",
        id,
        cx as usize,
        SIZE - cy as usize,
        r as usize
    )
}

/// `count` images alternating normal/abnormal under `dir/images`, plus
/// `dir/info.txt`. Returns `(image dir, info path)`.
pub fn write_dataset(dir: &Path, count: usize) -> (PathBuf, PathBuf) {
    let images = dir.join("images");
    fs::create_dir_all(&images).unwrap();
    let mut info = String::new();
    for i in 0..count {
        let id = format!("mdb{:03}", i + 1);
        let abnormal = i % 2 == 1;
        save(
            &phantom(abnormal, i as u64),
            images.join(format!("{}.pgm", id)),
        )
        .unwrap();
        if abnormal {
            info.push_str(&lesion_line(&id));
        } else {
            info.push_str(&format!("{} F NORM\n", id));
        }
    }
    let info_path = dir.join("info.txt");
    fs::write(&info_path, info).unwrap();
    (images, info_path)
}
