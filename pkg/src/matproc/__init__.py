"""matproc: inverse procedural modeling of SVBRDF material maps.

The toolkit decomposes a set of aligned material rasters (albedo, height,
roughness) into a tree of statistically uniform sub-materials, converts each
sub-material into a multi-layer spectral noise model, fits procedural mask
generators to the decomposition masks, and re-optimizes the assembled graph
against renderings of the input. The resulting model re-synthesizes at any
resolution or scale and stays parametrically editable.

Subpackage map:

- :mod:`matproc.model`      shared data model (maps, tree, parameter vectors)
- :mod:`matproc.maps_io`    raster I/O and normal/height conversion
- :mod:`matproc.spectral`   Welch local spectra and PCA reduction
- :mod:`matproc.matting`    spectrum-aware KNN matting
- :mod:`matproc.instances`  instance extraction, clustering, label sampling
- :mod:`matproc.noisefit`   multi-layer noise decomposition and synthesis
- :mod:`matproc.gabor`      spectral Gabor basis for the residual layer
- :mod:`matproc.inpaint`    patch-based hole filling
- :mod:`matproc.pptbf`      procedural mask generator, database, inverse fit
- :mod:`matproc.recompose`  filter graph, renderer, loss, graph optimizer
- :mod:`matproc.project`    on-disk project bundles
- :mod:`matproc.pipeline`   stage orchestration
- :mod:`matproc.service`    HTTP API used by the browser studio
"""

from matproc.model import MaterialMaps, MaterialTree, TreeNode

__version__ = "0.1.0"

__all__ = ["MaterialMaps", "MaterialTree", "TreeNode", "__version__"]
