from unittest import TestCase


class TokenizerTest(TestCase):
    def test_assignments(self):
        from sigma2r.tokenize import iter_assignments
        body = "# comment only\n\nepochs=3\n  model = lenet   # inline\n"
        pairs = list(iter_assignments(body, 'run.cfg'))
        self.assertEqual(pairs, [('epochs', '3'), ('model', 'lenet')])
        key, value = pairs[1]
        self.assertEqual(key.location, (4, 2))
        self.assertEqual(value.location, (4, 10))
        self.assertEqual(value.filename, 'run.cfg')

    def test_non_assignment(self):
        from sigma2r.tokenize import iter_lines
        from sigma2r.tokenize import split_assignment
        lines = list(iter_lines("epochs 3\n"))
        self.assertEqual(lines, ['epochs 3'])
        self.assertIsNone(split_assignment(lines[0]))

    def test_token(self):
        from sigma2r.tokenize import Token
        token = Token("seed = 1", 0, "n = 2\nseed = 1")
        self.assertEqual(token.location, (1, 0))
        token = Token("seed = 1", 6, "n = 2\nseed = 1")
        self.assertEqual(token.location, (2, 0))
        self.assertEqual(token[7:].location, (2, 7))
        self.assertEqual(token[0], 's')

    def test_token_split(self):
        from sigma2r.tokenize import Token
        body = "crop, hflip"
        parts = [part.strip() for part in Token(body, 0, body).split(',')]
        self.assertEqual(parts, ['crop', 'hflip'])
        self.assertEqual(parts[1].location, (1, 6))

    def test_token_without_source(self):
        from sigma2r.tokenize import Token
        self.assertEqual(Token('epochs').location, (0, 0))
