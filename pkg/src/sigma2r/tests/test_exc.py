import pickle
from unittest import TestCase

from sigma2r import exc
from sigma2r import tokenize


class TestConfigError(TestCase):

    def test_keep_token_location_info(self):
        token = tokenize.Token('stuff', 5, 'more\nstuff', 'run.cfg')
        error = exc.ConfigError('message', token)
        s = str(error)
        self.assertTrue(
            '- Location:   (line 2: col 0)' in s,
            'No location data found\n%s' % s)
        self.assertIn(' - Filename:   run.cfg', s)

    def test_summary(self):
        body = 'epochs = 3\nn = one'
        token = tokenize.Token('one', body.index('one'), body, 'run.cfg')
        error = exc.ConfigError('invalid value for n', token)
        self.assertEqual(
            error.summary, 'invalid value for n (run.cfg, line 2: col 4)')

    def test_source_marker(self):
        body = 'lambda = lots'
        token = tokenize.Token('lots', 9, body)
        lines = str(exc.ConfigError('invalid', token)).splitlines()
        self.assertEqual(lines[-2], ' - Source:     lambda = lots')
        self.assertEqual(lines[-1], ' ' * 24 + '^^^^')

    def test_plain_string_token(self):
        error = exc.ConfigError('invalid value for epochs', 'epochs')
        self.assertIn('(line 0: col 0)', str(error))

    def test_is_value_error(self):
        self.assertTrue(issubclass(exc.ConfigError, ValueError))


class TestCategories(TestCase):
    def test_categories_are_distinct(self):
        classes = [
            cls for cls in vars(exc).values()
            if isinstance(cls, type) and issubclass(cls, exc.Sigma2RError)
        ]
        categories = [cls.category for cls in classes]
        self.assertEqual(len(categories), len(set(categories)))
        self.assertIn('degenerate-batch', categories)

    def test_divergence(self):
        error = exc.DivergenceError(2, 7, {'total': float('nan'), 'aux': 1.0})
        self.assertEqual(error.batch, 7)
        self.assertEqual(
            str(error),
            'non-finite loss in epoch 2, batch 7 (aux=1.0, total=nan)')

    def test_missing_gradient(self):
        error = exc.MissingGradientError('centers')
        self.assertEqual(str(error), 'no gradient for parameter: centers.')
        copy = pickle.loads(pickle.dumps(error))
        self.assertEqual(str(copy), str(error))

    def test_dataset_format_hierarchy(self):
        for cls in (exc.BadMagicError, exc.TruncatedFileError,
                    exc.CountMismatchError):
            self.assertTrue(issubclass(cls, exc.DatasetFormatError))
