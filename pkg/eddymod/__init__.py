from .mesh import TetMesh, ObjectSpec, load_mesh, save_mesh, apply_orthogonal, canonicalize
from .fixtures import cube_mesh, sphere_mesh, box_mesh, medium_sphere_mesh
from .transmission import SolveConfig, ThetaSolution, solve_theta, solve_batch, superpose_adelta, volume_moment
from .gmpt import GmptSet, assemble_C, assemble_N, assemble_A, reduce_A_to_C, mpt, assemble_set
from .gmpt import check_frame_equivariance, polya_szego
from .forward import ExpansionResult, eval_expansion, oracle_field, voltage, convergence_study
