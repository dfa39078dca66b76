/// Mixed-radix index over a product of finite sets.
///
/// Component 0 is the most significant digit, so flat indices enumerate
/// profiles in lexicographic order of the declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl ProfileSpace {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut strides = vec![0; sizes.len()];
        let mut acc = 1usize;
        for (slot, &size) in strides.iter_mut().zip(sizes.iter()).rev() {
            *slot = acc;
            acc = acc.saturating_mul(size);
        }
        Self {
            sizes,
            strides,
            len: acc,
        }
    }

    /// Number of profiles (product of component sizes).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, component: usize) -> usize {
        self.sizes[component]
    }

    pub fn index(&self, profile: &[usize]) -> usize {
        debug_assert_eq!(profile.len(), self.sizes.len());
        profile
            .iter()
            .zip(self.strides.iter())
            .map(|(&p, &s)| p * s)
            .sum()
    }

    pub fn component(&self, index: usize, component: usize) -> usize {
        (index / self.strides[component]) % self.sizes[component]
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        (0..self.sizes.len())
            .map(|c| self.component(index, c))
            .collect()
    }

    pub fn decode_into(&self, index: usize, out: &mut [usize]) {
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.component(index, c);
        }
    }

    /// Index of the profile obtained by replacing one component.
    pub fn with_component(&self, index: usize, component: usize, value: usize) -> usize {
        let current = self.component(index, component);
        index - current * self.strides[component] + value * self.strides[component]
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len).map(move |i| self.decode(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_replacement() {
        let space = ProfileSpace::new(vec![2, 3, 2]);
        assert_eq!(space.len(), 12);
        for idx in 0..space.len() {
            assert_eq!(space.index(&space.decode(idx)), idx);
        }
        let idx = space.index(&[1, 2, 0]);
        assert_eq!(space.decode(space.with_component(idx, 1, 0)), vec![1, 0, 0]);
        assert_eq!(space.decode(0), vec![0, 0, 0]);
        assert_eq!(space.decode(1), vec![0, 0, 1]);
    }

    #[test]
    fn empty_product_has_one_profile() {
        let space = ProfileSpace::new(vec![]);
        assert_eq!(space.len(), 1);
        assert_eq!(space.index(&[]), 0);
    }
}
