from .annotation_service import AnnotationService
from .planted_data_service import PlantedData, PlantedDataService, PlantedSpec

__all__ = ['AnnotationService', 'PlantedData', 'PlantedDataService', 'PlantedSpec']
