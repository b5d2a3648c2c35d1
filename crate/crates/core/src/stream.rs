//! Time-tagged detection records, the exchange format between simulation
//! and analysis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub channel: u8,
    pub time_ps: u64,
}

impl TimeTag {
    pub fn new(channel: u8, time_ps: u64) -> Self {
        Self { channel, time_ps }
    }

    fn order_key(&self) -> (u64, u8) {
        (self.time_ps, self.channel)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("tag {index} is out of order (time {time_ps} ps, channel {channel})")]
    Unsorted { index: usize, time_ps: u64, channel: u8 },
    #[error("tag {index} uses channel {channel}, stream has {channel_count} channels")]
    ChannelOutOfRange { index: usize, channel: u8, channel_count: u8 },
    #[error("tag {index} at {time_ps} ps is not before the stream duration {duration_ps} ps")]
    BeyondDuration { index: usize, time_ps: u64, duration_ps: u64 },
    #[error("resolution must be at least 1 ps")]
    ZeroResolution,
}

/// Tags sorted by time with ties broken by channel; every time is below
/// `duration_ps` and every channel below `channel_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagStream {
    resolution_ps: u64,
    duration_ps: u64,
    channel_count: u8,
    tags: Vec<TimeTag>,
}

impl TimeTagStream {
    /// Validating constructor; tags must already be in stream order.
    pub fn new(
        resolution_ps: u64,
        duration_ps: u64,
        channel_count: u8,
        tags: Vec<TimeTag>,
    ) -> Result<Self, StreamError> {
        let stream = Self {
            resolution_ps,
            duration_ps,
            channel_count,
            tags,
        };
        stream.validate()?;
        Ok(stream)
    }

    /// Sorts the tags into stream order before validating.
    pub fn from_unsorted(
        resolution_ps: u64,
        duration_ps: u64,
        channel_count: u8,
        mut tags: Vec<TimeTag>,
    ) -> Result<Self, StreamError> {
        tags.sort_unstable_by_key(TimeTag::order_key);
        Self::new(resolution_ps, duration_ps, channel_count, tags)
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.resolution_ps == 0 {
            return Err(StreamError::ZeroResolution);
        }
        let mut prev: Option<(u64, u8)> = None;
        for (index, tag) in self.tags.iter().enumerate() {
            if tag.channel >= self.channel_count {
                return Err(StreamError::ChannelOutOfRange {
                    index,
                    channel: tag.channel,
                    channel_count: self.channel_count,
                });
            }
            if tag.time_ps >= self.duration_ps {
                return Err(StreamError::BeyondDuration {
                    index,
                    time_ps: tag.time_ps,
                    duration_ps: self.duration_ps,
                });
            }
            let key = tag.order_key();
            if prev.is_some_and(|p| key < p) {
                return Err(StreamError::Unsorted {
                    index,
                    time_ps: tag.time_ps,
                    channel: tag.channel,
                });
            }
            prev = Some(key);
        }
        Ok(())
    }

    pub fn resolution_ps(&self) -> u64 {
        self.resolution_ps
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn channel_count(&self) -> u8 {
        self.channel_count
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<TimeTag> {
        self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Times of all tags on `channel`, in order.
    pub fn channel_times(&self, channel: u8) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.time_ps)
            .collect()
    }

    pub fn count_on(&self, channel: u8) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    /// Same stream with every tag moved later by `offset_ps`; the duration
    /// grows by the same amount.
    pub fn shifted(&self, offset_ps: u64) -> Self {
        Self {
            resolution_ps: self.resolution_ps,
            duration_ps: self.duration_ps + offset_ps,
            channel_count: self.channel_count,
            tags: self
                .tags
                .iter()
                .map(|t| TimeTag::new(t.channel, t.time_ps + offset_ps))
                .collect(),
        }
    }
}
