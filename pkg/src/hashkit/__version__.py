###############################################################################
### Package Metadata
###############################################################################
__author__ = "Tom Burge"
__author_email__ = "tom@tomburge.org"
__copyright__ = "Copyright Tom Burge"
__description__ = "Supervised discrete hashing and Hamming-space retrieval."
__license__ = "MIT"
__title__ = "hashkit"
__url__ = "https://github.com/cloudstuffio/hashkit"
__version__ = "0.1.0"
