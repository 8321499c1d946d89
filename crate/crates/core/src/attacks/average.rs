//! Steganalytic averaging of an image corpus.

use crate::error::Result;
use crate::image::{mean_image, Image};

/// Pixel-wise mean of the corpus; all images must share one shape.
pub fn average_corpus(images: &[Image]) -> Result<Image> {
    mean_image(images)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_corpus_averages_to_itself() {
        let img = Image::from_fn(3, 3, |y, x, c| (y + 2 * x + c) as f64 / 10.0);
        assert_eq!(average_corpus(&[img.clone(), img.clone()]).unwrap(), img);
    }
}
