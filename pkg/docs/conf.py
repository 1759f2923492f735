# sigma2r documentation build configuration file.

from importlib.metadata import version as distribution_version


sigma2r_version = distribution_version('sigma2r')

extensions = [
    'sphinx.ext.intersphinx',
]

master_doc = 'index'
exclude_patterns = ['_build']

project = 'sigma2r'
copyright = '2026, The sigma2r contributors'

# The short X.Y version and the full release string.
version = '%s.%s' % tuple(map(int, sigma2r_version.split('.')[:2]))
release = sigma2r_version

pygments_style = 'sphinx'

html_theme = 'sphinx_rtd_theme'
html_title = "sigma2r %s documentation" % version

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable', None),
}
