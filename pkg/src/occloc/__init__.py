"""Vehicle localization from LED beacons seen by an optical-camera-communication receiver."""

from .camera import CameraIntrinsics, CameraExtrinsics, ExposureSettings, PixelFootprint
from .harness import (CameraConfig, ErrorStats, ExperimentSpec, LinkConfig, PipelineConfig,
                      run_pipeline, sweep)
from .link import BeaconId, ChannelParams
from .localization import distance_from_pixels, triangulate, update_hv_position
from .scene import LedPanelSpec, ScenarioConfig, StreetlightSpec, VehicleSpec

__version__ = "0.1.0"
