from app.utils.graph_utils import *
from app.utils.validators import *
