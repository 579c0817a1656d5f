use std::ops::Range;

pub const NUM_LANDMARKS: usize = 60;
pub const COORDS: usize = 3;
/// Flattened features per frame.
pub const FEATURES: usize = NUM_LANDMARKS * COORDS;

/// Landmark grouping of a frame: face, body, left hand, right hand, each
/// landmark stored as `(x, y, z)`. Hand landmarks are planar and carry
/// `z = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LandmarkLayout {
    pub face: usize,
    pub body: usize,
    pub hand: usize,
}

impl Default for LandmarkLayout {
    fn default() -> Self {
        Self { face: 12, body: 6, hand: 21 }
    }
}

impl LandmarkLayout {
    pub fn total(&self) -> usize {
        self.face + self.body + 2 * self.hand
    }

    pub fn features(&self) -> usize {
        self.total() * COORDS
    }

    pub fn face_landmarks(&self) -> Range<usize> {
        0..self.face
    }

    pub fn body_landmarks(&self) -> Range<usize> {
        self.face..self.face + self.body
    }

    pub fn left_hand_landmarks(&self) -> Range<usize> {
        let s = self.face + self.body;
        s..s + self.hand
    }

    pub fn right_hand_landmarks(&self) -> Range<usize> {
        let s = self.face + self.body + self.hand;
        s..s + self.hand
    }

    /// Both hands, which are contiguous at the end of the frame.
    pub fn hand_landmarks(&self) -> Range<usize> {
        self.face + self.body..self.total()
    }

    pub fn is_hand(&self, landmark: usize) -> bool {
        self.hand_landmarks().contains(&landmark)
    }
}
