"""Joint precoding and fronthaul compression for cell-free MIMO downlink on radio stripes."""
