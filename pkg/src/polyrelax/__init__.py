"""Approximate convex hulls, multi-neuron relaxations and LP-based network certification."""
from .abstraction import GroupingConfig, NeuronGroup, analyze_bounds, octahedral_projection, partition_layer, select_groups
from .errors import (
    BackendUnavailable,
    DegenerateRay,
    EmptyInput,
    OriginNotInterior,
    ParseError,
    PolyrelaxError,
    ShapeError,
    StableNeuron,
    UnboundedPolytope,
    UnsupportedLayer,
)
from .network import Network, Property, Sample, evaluate, load_dataset, load_network, save_network
from .pddm import batch_intersect, convex_hull_approx, pddm_intersect
from .polytope import HPoly, Pdd, VPoly, dehomogenize, dualize, homogenize
from .sblm import ActivationSpec, maxpool_spec, relu_spec, sblm, scurve_spec
from .verifier import CertResult, EncodingOptions, bound_output_range, certify, encode

__version__ = "0.1.0"
