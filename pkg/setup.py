from setuptools import setup, find_packages

setup(
	name='lagrangian_audit',
	version='0.1.0',
	packages=find_packages(exclude=['test', 'test.*']),
	install_requires=[
		'tqdm>=4.51.0',
		'argh>=0.26.2,<0.30',
		'numpy>=1.19.4',
		'ujson>=4.0.2',
		'psutil>=5.7.3',
	],
)
