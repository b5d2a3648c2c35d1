use proptest::prelude::*;
use spsim_core::ptag;
use spsim_core::stream::{TimeTag, TimeTagStream};

proptest! {
    #[test]
    fn write_then_read_is_lossless(
        tags in prop::collection::vec((0u8..4, 0u64..u64::MAX / 2), 0..2000),
        resolution in 1u64..100,
    ) {
        let tags: Vec<TimeTag> = tags.into_iter().map(|(c, t)| TimeTag::new(c, t)).collect();
        let end = tags.iter().map(|t| t.time_ps + 1).max().unwrap_or(0);
        let stream = TimeTagStream::from_unsorted(resolution, end, 4, tags).unwrap();
        let bytes = ptag::encode(&stream);
        let back = ptag::decode(&bytes).unwrap();
        prop_assert_eq!(back.tags(), stream.tags());
        prop_assert_eq!(back.resolution_ps(), stream.resolution_ps());
        prop_assert_eq!(back.channel_count(), stream.channel_count());
        prop_assert_eq!(ptag::encode(&back), bytes);
    }
}
