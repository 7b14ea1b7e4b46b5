"""Report and archive schemas."""
